"""Environment-driven settings and per-command run configurations."""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass, field

from .errors import DomainError
from .kernels import HyperBox, MaternParams

THREADS_ENV = "SPECGP_THREADS"
RULE_STORE_ENV = "SPECGP_RULE_STORE"

EPS_MIN = 1e-8
EPS_MAX = 1e-2


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError as e:
        raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from e
    return max(value, 1)


def rule_store_url() -> str | None:
    return os.environ.get(RULE_STORE_ENV) or None


def _strict_box(box: HyperBox) -> None:
    if not (box.nu_lo < box.nu_hi and box.rho_lo < box.rho_hi):
        raise DomainError(
            "box must satisfy nu0 < nu1 and rho0 < rho1, got "
            + ",".join(repr(v) for v in box.as_tuple())
        )


@dataclass(frozen=True)
class BuildConfig:
    box: HyperBox
    epsilon: float = 1e-5
    p: int = 100
    n: int = 200
    out: str = "rule.txt"
    store: str | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> BuildConfig:
        return cls(
            box=HyperBox.parse(args.box),
            epsilon=args.eps,
            p=args.p,
            n=args.n,
            out=args.out,
            store=args.store or rule_store_url(),
        )

    def validate(self) -> None:
        _strict_box(self.box)
        if not EPS_MIN <= self.epsilon <= EPS_MAX:
            raise DomainError(f"--eps must lie in [{EPS_MIN}, {EPS_MAX}]")
        if self.p < 2 or self.n < 2:
            raise DomainError("--p and --n must be at least 2")


@dataclass(frozen=True)
class ValidateConfig:
    rule: str = "embedded"
    nus: tuple[float, ...] = ()
    rhos: tuple[float, ...] = ()
    store: str | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> ValidateConfig:
        return cls(
            rule=args.rule,
            nus=tuple(args.nu or ()),
            rhos=tuple(args.rho or ()),
            store=args.store or rule_store_url(),
        )

    def validate(self) -> None:
        for value in (*self.nus, *self.rhos):
            if not value > 0:
                raise DomainError(f"hyperparameters must be positive, got {value}")


@dataclass(frozen=True)
class RegressConfig:
    rule: str = "embedded"
    nu: float = 3.0
    rho: float = 0.1
    sigma2: float = 0.5
    N: int = 100_000
    seed: int = 0
    data: str | None = None
    out: str | None = None
    grid_size: int = 200
    force_fast: bool = False
    store: str | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RegressConfig:
        return cls(
            rule=args.rule,
            nu=args.nu,
            rho=args.rho,
            sigma2=args.sigma2,
            N=args.N,
            seed=args.seed,
            data=args.data,
            out=args.out,
            grid_size=args.grid_size,
            force_fast=args.force_fast_path,
            store=args.store or rule_store_url(),
        )

    @property
    def params(self) -> MaternParams:
        return MaternParams(self.nu, self.rho)

    def validate(self) -> None:
        if not self.sigma2 > 0:
            raise DomainError(f"--sigma2 must be > 0, got {self.sigma2}")
        if self.data is None and self.N < 2:
            raise DomainError(f"--N must be at least 2, got {self.N}")
        if self.grid_size < 1:
            raise DomainError("--grid-size must be positive")
        self.params


@dataclass(frozen=True)
class FitConfig:
    rule: str = "embedded"
    nu: float = 2.0
    rho: float = 0.2
    sigma2: float = 1.0
    steps: int = 50
    N: int = 10_000
    seed: int = 0
    data: str | None = None
    force_fast: bool = False
    store: str | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> FitConfig:
        return cls(
            rule=args.rule,
            nu=args.nu,
            rho=args.rho,
            sigma2=args.sigma2,
            steps=args.steps,
            N=args.N,
            seed=args.seed,
            data=args.data,
            force_fast=args.force_fast_path,
            store=args.store or rule_store_url(),
        )

    def validate(self) -> None:
        if not self.sigma2 > 0:
            raise DomainError(f"--sigma2 must be > 0, got {self.sigma2}")
        if self.steps < 0:
            raise DomainError("--steps must be non-negative")
        if self.data is None and self.N < 2:
            raise DomainError(f"--N must be at least 2, got {self.N}")
        MaternParams(self.nu, self.rho)


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple[int, ...] = field(default_factory=tuple)
    rule: str = "embedded"
    nu: float = 3.0
    rho: float = 0.1
    sigma2: float = 0.5
    seed: int = 0
    store: str | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> BenchConfig:
        return cls(
            sizes=tuple(args.N or ()),
            rule=args.rule,
            nu=args.nu,
            rho=args.rho,
            sigma2=args.sigma2,
            seed=args.seed,
            store=args.store or rule_store_url(),
        )

    def validate(self) -> None:
        if not self.sigma2 > 0:
            raise DomainError(f"--sigma2 must be > 0, got {self.sigma2}")
        if any(size < 2 for size in self.sizes):
            raise DomainError("every --N must be at least 2")
        MaternParams(self.nu, self.rho)
