# app/tools/config.py
# -*- coding: utf-8 -*-
"""
Конфігурація прогону: значення за замовчуванням < змінні середовища (.env) < JSON-файл < прапорці CLI.
JSON -- плаский об'єкт з ключами як у прапорців (world, cus, arena-mib, ...).
"""

from __future__ import annotations
import json
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

try:
    from dotenv import load_dotenv
    load_dotenv()
except Exception:
    pass

from .bench import ALL_OPS, DESK_SHAPES, P2P_OPS
from .patterns_taxonomy import LABELS

COMMANDS = ("bench-p2p", "bench-all", "bench-patterns", "validate", "demo")
DEFAULT_SIZES = [4 << 10, 16 << 10, 64 << 10, 256 << 10, 1 << 20, 4 << 20, 16 << 20, 64 << 20]

_UNITS = {"": 1, "b": 1, "kib": 1 << 10, "mib": 1 << 20, "gib": 1 << 30}
_SIZE_RE = re.compile(r"^\s*(\d+)\s*([a-zA-Z]*)\s*$")
_SHAPE_RE = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*[xX]\s*(\d+)\s*$")


class ConfigError(ValueError):
    """Помилка використання: невідомий ключ, неправильне значення."""


# ---------- Граматики ----------
def parse_size(text: Union[str, int]) -> int:
    """'4096' | '4KiB' | '64MiB' | '1GiB' -> байти."""
    if isinstance(text, int):
        return text
    m = _SIZE_RE.match(str(text))
    if not m or m.group(2).lower() not in _UNITS:
        raise ConfigError(f"Неправильний розмір {text!r}; очікується <n>[KiB|MiB|GiB]")
    return int(m.group(1)) * _UNITS[m.group(2).lower()]


def format_size(n: int) -> str:
    for unit, mult in (("GiB", 1 << 30), ("MiB", 1 << 20), ("KiB", 1 << 10)):
        if n >= mult and n % mult == 0:
            return f"{n // mult}{unit}"
    return str(n)


def parse_shape(text: Union[str, List[int], Tuple[int, ...]]) -> Tuple[int, int, int]:
    """'512x288x2304' -> (512, 288, 2304)."""
    if isinstance(text, (list, tuple)):
        if len(text) != 3:
            raise ConfigError(f"Форма має три виміри, отримано {text!r}")
        return tuple(int(x) for x in text)
    m = _SHAPE_RE.match(str(text))
    if not m:
        raise ConfigError(f"Неправильна форма {text!r}; очікується MxNxK")
    return int(m.group(1)), int(m.group(2)), int(m.group(3))


def format_shape(shape: Tuple[int, int, int]) -> str:
    return "x".join(str(s) for s in shape)


def _split(value: Union[str, List[Any]]) -> List[Any]:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [v.strip() for v in str(value).split(",") if v.strip()]


def parse_comm_delay(value: Union[None, str, int, float]) -> Union[None, float, str]:
    if value is None or value == "":
        return None
    if isinstance(value, str) and value.strip().lower() == "auto":
        return "auto"
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"comm-delay-us: число мікросекунд або 'auto', отримано {value!r}")


TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off", "")


def parse_bool(value: Union[bool, int, str]) -> bool:
    """JSON true/false, 0/1 або рядок з TRUE_WORDS / FALSE_WORDS (для змінних середовища)."""
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        word = value.strip().lower()
        if word in TRUE_WORDS:
            return True
        if word in FALSE_WORDS:
            return False
    raise ConfigError(f"Очікується true/false, отримано {value!r}")


# ---------- RunConfig ----------
@dataclass
class RunConfig:
    command: str = "validate"
    world: int = 4
    cus: int = 8
    arena_mib: int = 256
    seed: int = 0
    sizes: List[int] = field(default_factory=lambda: list(DEFAULT_SIZES))
    shapes: List[Tuple[int, int, int]] = field(default_factory=lambda: list(DESK_SHAPES))
    patterns: List[str] = field(default_factory=lambda: list(LABELS))
    ops: Optional[List[str]] = None
    worlds: Optional[List[int]] = None
    comm_delay_us: Union[None, float, str] = None
    compute_delay_us: float = 0.0
    out: str = "./results"
    timeout_s: float = 30.0
    iters: int = 5
    repeats: int = 5
    sqlite: Optional[str] = None
    inject_fault: Optional[str] = None
    quick: bool = False

    @property
    def arena_size(self) -> int:
        return self.arena_mib << 20

    @property
    def comm_delay(self) -> Union[None, float, str]:
        if self.comm_delay_us is None or self.comm_delay_us == "auto":
            return self.comm_delay_us
        return float(self.comm_delay_us) * 1e-6

    def resolved_ops(self) -> List[str]:
        if self.ops:
            return list(self.ops)
        return list(ALL_OPS) if self.command == "bench-all" else list(P2P_OPS)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"Невідома команда {self.command!r}; дозволено: {COMMANDS}")
        for name in ("world", "cus", "arena_mib", "repeats"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} має бути >= 1, отримано {getattr(self, name)}")
        if self.iters < 3:
            raise ConfigError(f"iters має бути >= 3, отримано {self.iters}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout-s має бути > 0, отримано {self.timeout_s}")
        if any(s < 4 or s % 4 for s in self.sizes):
            raise ConfigError(f"Розміри мають бути кратні 4 B: {self.sizes}")
        if any(min(s) < 1 for s in self.shapes):
            raise ConfigError(f"Виміри форм мають бути >= 1: {self.shapes}")
        unknown = [p for p in self.patterns if p not in LABELS]
        if unknown:
            raise ConfigError(f"Невідомі патерни {unknown}; дозволено: {LABELS}")
        allowed_ops = P2P_OPS + ALL_OPS
        bad_ops = [o for o in (self.ops or []) if o not in allowed_ops]
        if bad_ops:
            raise ConfigError(f"Невідомі операції {bad_ops}; дозволено: {allowed_ops}")
        if self.worlds and min(self.worlds) < 1:
            raise ConfigError(f"worlds мають бути >= 1: {self.worlds}")
        if isinstance(self.comm_delay_us, float) and self.comm_delay_us < 0:
            raise ConfigError("comm-delay-us не може бути від'ємним")
        if self.compute_delay_us < 0:
            raise ConfigError("compute-delay-us не може бути від'ємним")
        return self


# ключ (як у прапорця) -> (поле RunConfig, перетворення)
KEYS: Dict[str, Tuple[str, Any]] = {
    "world": ("world", int),
    "cus": ("cus", int),
    "arena-mib": ("arena_mib", int),
    "seed": ("seed", int),
    "sizes": ("sizes", lambda v: [parse_size(x) for x in _split(v)]),
    "shapes": ("shapes", lambda v: [parse_shape(x) for x in (v if isinstance(v, list) and v and isinstance(v[0], list) else _split(v))]),
    "patterns": ("patterns", lambda v: [str(x) for x in _split(v)]),
    "ops": ("ops", lambda v: [str(x) for x in _split(v)]),
    "worlds": ("worlds", lambda v: [int(x) for x in _split(v)]),
    "comm-delay-us": ("comm_delay_us", parse_comm_delay),
    "compute-delay-us": ("compute_delay_us", float),
    "out": ("out", str),
    "timeout-s": ("timeout_s", float),
    "iters": ("iters", int),
    "repeats": ("repeats", int),
    "sqlite": ("sqlite", lambda v: str(v) if v else None),
    "inject-fault": ("inject_fault", lambda v: str(v) if v else None),
    "quick": ("quick", parse_bool),
}

ENV_KEYS = {
    "SYMHEAP_WORLD": "world",
    "SYMHEAP_CUS": "cus",
    "SYMHEAP_ARENA_MIB": "arena-mib",
    "SYMHEAP_SEED": "seed",
    "SYMHEAP_TIMEOUT_S": "timeout-s",
    "SYMHEAP_OUT": "out",
    "SYMHEAP_SQLITE": "sqlite",
}


def apply_values(cfg: RunConfig, values: Dict[str, Any], source: str) -> RunConfig:
    for raw_key, value in values.items():
        key = raw_key.replace("_", "-")
        if key not in KEYS:
            raise ConfigError(f"Невідомий ключ {raw_key!r} у {source}; дозволено: {sorted(KEYS)}")
        name, convert = KEYS[key]
        try:
            setattr(cfg, name, convert(value))
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Неправильне значення {raw_key}={value!r} у {source}: {e}")
    return cfg


def env_values(environ: Optional[Dict[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    return {key: environ[var] for var, key in ENV_KEYS.items() if environ.get(var, "") != ""}


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Файл конфігурації не знайдено: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Файл конфігурації {path} не є JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Файл конфігурації {path} має бути JSON-об'єктом")
    return data
