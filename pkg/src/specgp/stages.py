from __future__ import annotations

import time
from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

from .logger import get_logger

logger = get_logger("build")

STAGES = (
    "integrand_family",
    "select_nodes",
    "solve_weights",
    "refine_rule",
    "validate_rule",
)


@dataclass
class BuildReport:
    timings: dict[str, float] = field(default_factory=dict)
    node_counts: dict[str, int] = field(default_factory=dict)
    residual: float = float("nan")
    max_error: float = float("nan")
    argmax: tuple[float, float, float] | None = None
    loose: bool = False
    cache_hit: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())


class StageHook(ABC):
    @abstractmethod
    @contextmanager
    def __call__(self, stage: str, report: BuildReport) -> Iterator[None]:
        yield


class StageTimer(StageHook):
    @contextmanager
    def __call__(self, stage: str, report: BuildReport) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            report.timings[stage] = report.timings.get(stage, 0.0) + (
                time.perf_counter() - start
            )


class StageLog(StageHook):
    @contextmanager
    def __call__(self, stage: str, report: BuildReport) -> Iterator[None]:
        logger.info(f"Stage {stage} started")
        try:
            yield
        except Exception as e:
            logger.error(f"Stage {stage} failed: {e}")
            raise
        m = report.node_counts.get(stage)
        suffix = f" (m={m})" if m is not None else ""
        logger.info(f"Stage {stage} finished{suffix}")


class Sentry(StageHook):
    def __init__(self, dsn: str) -> None:
        self.sentry = None
        try:
            import sentry_sdk  # type: ignore

            sentry_sdk.init(dsn=dsn)
            self.sentry = sentry_sdk
        except ImportError:
            # Sentry SDK is optional; if it's not installed, disable Sentry integration silently.
            pass

    @contextmanager
    def __call__(self, stage: str, report: BuildReport) -> Iterator[None]:
        try:
            yield
        except Exception as e:
            if self.sentry:
                self.sentry.set_tag("build_stage", stage)
                self.sentry.capture_exception(e)
            raise


def default_hooks() -> list[StageHook]:
    return [StageLog(), StageTimer()]
