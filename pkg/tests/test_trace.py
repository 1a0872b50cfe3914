# tests/test_trace.py
# -*- coding: utf-8 -*-
import threading
import time

import pytest

from app.tools.trace import EVENT_COLUMNS, TraceRecorder


def test_disabled_recorder_keeps_no_events():
    rec = TraceRecorder()
    with rec.span(0, "compute", tile_id=1):
        pass
    assert rec.to_frame().empty
    assert list(rec.to_frame().columns) == EVENT_COLUMNS


def test_span_and_phase_window():
    rec = TraceRecorder(enabled=True)
    with rec.span(0, "compute", pid=0, tile_id=0):
        time.sleep(0.01)
    with rec.span(1, "comm", pid=0, tile_id=0, peer=0):
        time.sleep(0.01)
    df = rec.to_frame()
    assert set(df["phase"]) == {"compute", "comm"}
    assert rec.phase_span("compute") >= 0.009
    assert rec.phase_span("missing") == 0.0
    rec.clear()
    assert rec.to_frame().empty


def test_tile_summary_counts_transfers():
    rec = TraceRecorder(enabled=True)
    rec.record(0, "compute", 0.0, 1.0, tile_id=3)
    rec.record(0, "comm", 1.0, 2.0, tile_id=3, peer=1)
    rec.record(0, "comm", 1.5, 2.5, tile_id=3, peer=2)
    summary = rec.tile_summary()
    row = summary[(summary["rank"] == 0) & (summary["tile_id"] == 3)].iloc[0]
    assert row["transfers"] == 2
    assert row["compute_end"] == 1.0
    assert row["comm_end"] == 2.5


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        TraceRecorder(comm_delay=-1.0)


def test_link_carries_one_transfer_at_a_time():
    rec = TraceRecorder(comm_delay=0.05)

    def send():
        with rec.transfer(0, 1):
            pass

    threads = [threading.Thread(target=send) for _ in range(3)]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert time.perf_counter() - t0 >= 0.14


def test_distinct_links_run_in_parallel_and_self_is_free():
    rec = TraceRecorder(comm_delay=0.1)

    def send(dst):
        with rec.transfer(0, dst):
            pass

    threads = [threading.Thread(target=send, args=(d,)) for d in (1, 2, 3)]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert time.perf_counter() - t0 < 0.25

    t0 = time.perf_counter()
    with rec.transfer(2, 2):
        pass
    assert time.perf_counter() - t0 < 0.05
