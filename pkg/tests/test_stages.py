import sys
import types
from contextlib import contextmanager

import pytest

from specgp.errors import BuildError
from specgp.quadrature import build_rule
from specgp.stages import BuildReport, Sentry, StageHook, StageLog, StageTimer


class Recorder(StageHook):
    def __init__(self):
        self.events = []

    @contextmanager
    def __call__(self, stage, report):
        self.events.append(("enter", stage))
        try:
            yield
        except Exception as e:
            self.events.append(("error", stage, type(e).__name__))
            raise
        self.events.append(("exit", stage))


def test_timer_accumulates():
    report = BuildReport()
    timer = StageTimer()
    for _ in range(2):
        with timer("select_nodes", report):
            pass
    assert set(report.timings) == {"select_nodes"}
    assert report.total_time == report.timings["select_nodes"] >= 0.0


def test_log_reraises(caplog):
    report = BuildReport()
    with pytest.raises(ValueError):
        with StageLog()("solve_weights", report):
            raise ValueError("boom")


def test_failing_stage_is_reported(small_box):
    recorder = Recorder()
    report = BuildReport()
    with pytest.raises(BuildError) as exc:
        build_rule(small_box, 1e-4, 4, 8, hooks=[recorder, StageTimer()], m_cap=1, report=report)
    assert exc.value.stage == "select_nodes"
    assert recorder.events[:3] == [
        ("enter", "integrand_family"),
        ("exit", "integrand_family"),
        ("enter", "select_nodes"),
    ]
    assert recorder.events[3] == ("error", "select_nodes", "BuildError")
    assert set(report.timings) == {"integrand_family", "select_nodes"}
    assert report.node_counts["integrand_family"] > 0


def test_foreign_exceptions_are_wrapped(small_box, monkeypatch):
    import specgp.quadrature as quadrature

    def broken(*args, **kwargs):
        raise ZeroDivisionError("bad family")

    monkeypatch.setattr(quadrature, "build_integrand_family", broken)
    with pytest.raises(BuildError) as exc:
        build_rule(small_box, 1e-4, 4, 8, hooks=[])
    assert exc.value.stage == "integrand_family"
    assert "bad family" in str(exc.value)
    assert isinstance(exc.value.__cause__, ZeroDivisionError)


def test_sentry_hook_captures(monkeypatch):
    captured = {}
    fake = types.SimpleNamespace(
        init=lambda dsn: captured.setdefault("dsn", dsn),
        set_tag=lambda key, value: captured.setdefault("tag", (key, value)),
        capture_exception=lambda e: captured.setdefault("error", e),
    )
    monkeypatch.setitem(sys.modules, "sentry_sdk", fake)
    hook = Sentry("https://key@example.invalid/1")
    with pytest.raises(RuntimeError):
        with hook("refine_rule", BuildReport()):
            raise RuntimeError("x")
    assert captured["dsn"] == "https://key@example.invalid/1"
    assert captured["tag"] == ("build_stage", "refine_rule")
    assert isinstance(captured["error"], RuntimeError)
