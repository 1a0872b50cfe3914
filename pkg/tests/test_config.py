# tests/test_config.py
# -*- coding: utf-8 -*-
import json

import pytest

from app.tools.config import (ConfigError, RunConfig, apply_values, env_values, format_shape, format_size,
                              load_config_file, parse_bool, parse_comm_delay, parse_shape, parse_size)


@pytest.mark.parametrize("text, expected", [("4096", 4096), ("4KiB", 4096), ("64MiB", 64 << 20),
                                            ("1GiB", 1 << 30), (" 16 kib ", 16 << 10), (512, 512)])
def test_parse_size(text, expected):
    assert parse_size(text) == expected


@pytest.mark.parametrize("bad", ["4KB", "abc", "-1", "1.5MiB"])
def test_parse_size_rejects(bad):
    with pytest.raises(ConfigError):
        parse_size(bad)


def test_format_size():
    assert format_size(4096) == "4KiB"
    assert format_size(3 << 20) == "3MiB"
    assert format_size(100) == "100"


def test_shapes():
    assert parse_shape("512x288x2304") == (512, 288, 2304)
    assert parse_shape([1, 2, 3]) == (1, 2, 3)
    assert format_shape((1, 2, 3)) == "1x2x3"
    with pytest.raises(ConfigError):
        parse_shape("512x288")


def test_comm_delay():
    assert parse_comm_delay("auto") == "auto"
    assert parse_comm_delay("250") == 250.0
    assert parse_comm_delay(None) is None
    with pytest.raises(ConfigError):
        parse_comm_delay("soon")
    cfg = RunConfig(comm_delay_us=500.0)
    assert cfg.comm_delay == pytest.approx(5e-4)


def test_apply_values_and_unknown_key():
    cfg = apply_values(RunConfig(), {"world": "2", "arena_mib": 16, "sizes": "4KiB,1MiB",
                                     "shapes": [[64, 64, 64]], "worlds": "1,2"}, "тесті")
    assert (cfg.world, cfg.arena_size, cfg.sizes) == (2, 16 << 20, [4096, 1 << 20])
    assert cfg.shapes == [(64, 64, 64)] and cfg.worlds == [1, 2]
    with pytest.raises(ConfigError):
        apply_values(RunConfig(), {"colour": "red"}, "тесті")
    with pytest.raises(ConfigError):
        apply_values(RunConfig(), {"world": "many"}, "тесті")


def test_env_values():
    env = {"SYMHEAP_WORLD": "8", "SYMHEAP_SQLITE": "", "UNRELATED": "x"}
    assert env_values(env) == {"world": "8"}


@pytest.mark.parametrize("field, value", [("world", 0), ("iters", 2), ("sizes", [6]), ("patterns", ["ring"]),
                                          ("ops", ["teleport"]), ("command", "serve"), ("timeout_s", 0)])
def test_validate_rejects(field, value):
    cfg = RunConfig()
    setattr(cfg, field, value)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_resolved_ops():
    assert RunConfig(command="bench-all").resolved_ops() == ["all_load", "all_store"]
    assert RunConfig(command="bench-p2p").resolved_ops()[0] == "load"
    assert RunConfig(command="bench-p2p", ops=["store"]).resolved_ops() == ["store"]


def test_load_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"world": 2}), encoding="utf-8")
    assert load_config_file(str(path)) == {"world": 2}
    (tmp_path / "list.json").write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "list.json"))
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "missing.json"))


@pytest.mark.parametrize("value, expected", [(True, True), (False, False), ("false", False), ("FALSE", False),
                                             ("0", False), ("", False), ("true", True), (" yes ", True), (1, True)])
def test_parse_bool(value, expected):
    assert parse_bool(value) is expected


def test_quick_string_false_stays_false():
    cfg = apply_values(RunConfig(), {"quick": "false"}, "тесті")
    assert cfg.quick is False
    with pytest.raises(ConfigError):
        apply_values(RunConfig(), {"quick": "maybe"}, "тесті")
