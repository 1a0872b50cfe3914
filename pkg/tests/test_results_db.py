# tests/test_results_db.py
# -*- coding: utf-8 -*-
import numpy as np

from app.tools.bench import BandwidthMatrix, PatternTiming
from app.tools.results_db import (finish_run, list_runs, load_bandwidth, load_pattern_timings, save_bandwidth,
                                  save_pattern_timings, start_run)


def test_run_lifecycle(tmp_path):
    db = str(tmp_path / "r.db")
    run_id = start_run(db, "bench-p2p", {"world": 2, "cus": 4, "seed": 1})
    assert run_id == 1
    assert finish_run(db, run_id, 0)
    runs = list_runs(db)
    assert runs.loc[0, "command"] == "bench-p2p"
    assert runs.loc[0, "world"] == 2
    assert runs.loc[0, "exit_code"] == 0


def test_bandwidth_upsert(tmp_path):
    db = str(tmp_path / "r.db")
    run_id = start_run(db, "bench-p2p", {"world": 2})
    m = BandwidthMatrix("store", 4096, np.ones((2, 2)), 2.0)
    assert save_bandwidth(db, run_id, [m])
    m2 = BandwidthMatrix("store", 4096, np.full((2, 2), 4.0), 2.0)
    assert save_bandwidth(db, run_id, [m2])
    df = load_bandwidth(db, "store")
    assert len(df) == 4
    assert df["gibps"].tolist() == [4.0] * 4
    assert load_bandwidth(db, "load").empty


def test_pattern_timings_nan_becomes_null(tmp_path):
    db = str(tmp_path / "r.db")
    run_id = start_run(db, "bench-patterns", {"world": 2})
    timings = [
        PatternTiming("bulk_sync", 64, 64, 64, 2, 0.5, 0.2, 0.3, True, overlap_eff=0.0),
        PatternTiming("fused_sequential", 64, 64, 64, 2, float("nan"), float("nan"), float("nan"), False),
    ]
    assert save_pattern_timings(db, run_id, timings)
    df = load_pattern_timings(db, run_id)
    assert df["pattern"].tolist() == ["bulk_sync", "fused_sequential"]
    failed = df[df["pattern"] == "fused_sequential"].iloc[0]
    assert failed["validated"] == 0
    assert np.isnan(failed["total_s"])


def test_empty_inputs_not_saved(tmp_path):
    db = str(tmp_path / "r.db")
    assert not save_bandwidth(db, 1, [])
    assert not save_pattern_timings(db, 1, [])
