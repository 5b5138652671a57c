from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, RuleFormatError
from .kernels import HyperBox

FORMAT_VERSION = 1
EMBEDDED_RESOURCE = "reference_86.rule"

_BOX_KEYS = ("a", "b", "nu_lo", "nu_hi", "rho_lo", "rho_hi")

# reference L² kernel errors of the embedded rule, keyed by (nu, rho)
EMBEDDED_L2_ERRORS: dict[tuple[float, float], float] = {
    (1.5, 0.1): 0.780e-4,
    (1.5, 0.3): 0.295e-5,
    (1.5, 0.5): 0.140e-5,
    (2.0, 0.1): 0.141e-4,
    (2.0, 0.3): 0.611e-6,
    (2.0, 0.5): 0.118e-4,
    (2.5, 0.1): 0.326e-5,
    (2.5, 0.3): 0.608e-6,
    (2.5, 0.5): 0.445e-6,
    (3.0, 0.1): 0.113e-5,
    (3.0, 0.3): 0.577e-6,
    (3.0, 0.5): 0.239e-6,
    (3.5, 0.1): 0.693e-6,
    (3.5, 0.3): 0.630e-6,
    (3.5, 0.5): 0.222e-6,
}


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Frequencies ``ξ_i`` (cycles per x-unit) and weights ``w_i`` valid on ``box``."""

    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]
    box: HyperBox
    epsilon: float
    loose: bool = False
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise DomainError("nodes and weights must be 1-D arrays of equal length")
        if nodes.size == 0:
            raise DomainError("a rule needs at least one node")
        if not np.all(np.isfinite(nodes)) or not np.all(np.isfinite(weights)):
            raise DomainError("nodes and weights must be finite")
        if np.any(nodes <= 0):
            raise DomainError("nodes must be strictly positive")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise DomainError("weights must be strictly positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return int(self.nodes.size)

    @property
    def certified_error(self) -> float:
        return 2.0 * self.epsilon if self.loose else self.epsilon

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuadratureRule):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
            and self.box == other.box
            and self.epsilon == other.epsilon
            and self.loose == other.loose
        )

    def to_text(self) -> str:
        lines = [
            f"# version={FORMAT_VERSION}",
            *(f"# {key}={value!r}" for key, value in zip(_BOX_KEYS, self.box.as_tuple())),
            f"# epsilon={self.epsilon!r}",
            f"# m={self.m}",
        ]
        if self.loose:
            lines.append("# loose=1")
        lines.extend(f"# {key}={value}" for key, value in sorted(self.meta.items()))
        lines.extend(f"{xi:.16e} {w:.16e}" for xi, w in zip(self.nodes, self.weights))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> QuadratureRule:
        header: dict[str, str] = {}
        rows: list[tuple[float, float]] = []

        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if rows:
                    raise RuleFormatError("header line after node data", lineno)
                body = line[1:].strip()
                if "=" not in body:
                    raise RuleFormatError(f"malformed header {line!r}", lineno)
                key, value = (part.strip() for part in body.split("=", 1))
                if not key or key in header:
                    raise RuleFormatError(f"bad or repeated header key {key!r}", lineno)
                header[key] = value
                continue

            parts = line.split()
            if len(parts) != 2:
                raise RuleFormatError(f"expected '<xi> <w>', got {line!r}", lineno)
            try:
                xi, w = float(parts[0]), float(parts[1])
            except ValueError as e:
                raise RuleFormatError(f"non-numeric node row {line!r}", lineno) from e
            if not (np.isfinite(xi) and np.isfinite(w)):
                raise RuleFormatError("non-finite node row", lineno)
            if w <= 0:
                raise RuleFormatError(f"nonpositive weight {w!r}", lineno)
            if xi <= 0:
                raise RuleFormatError(f"nonpositive node {xi!r}", lineno)
            if rows and xi <= rows[-1][0]:
                raise RuleFormatError("nodes must be strictly ascending", lineno)
            rows.append((xi, w))

        if header.get("version") != str(FORMAT_VERSION):
            raise RuleFormatError(f"unsupported or missing version {header.get('version')!r}")
        try:
            box = HyperBox(**{key: float(header[key]) for key in _BOX_KEYS})
            epsilon = float(header["epsilon"])
            m = int(header["m"])
        except KeyError as e:
            raise RuleFormatError(f"missing header key {e.args[0]!r}") from e
        except ValueError as e:
            raise RuleFormatError(f"bad header value: {e}") from e
        if m != len(rows):
            raise RuleFormatError(f"header says m={m} but found {len(rows)} rows")
        if not epsilon > 0:
            raise RuleFormatError(f"epsilon must be positive, got {epsilon}")

        known = {"version", "epsilon", "m", "loose", *_BOX_KEYS}
        data = np.array(rows, dtype=np.float64)
        return cls(
            nodes=data[:, 0],
            weights=data[:, 1],
            box=box,
            epsilon=epsilon,
            loose=header.get("loose", "0") == "1",
            meta={k: v for k, v in header.items() if k not in known},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def load(cls, path: str | Path) -> QuadratureRule:
        try:
            text = Path(path).read_text(encoding="ascii")
        except UnicodeDecodeError as e:
            raise RuleFormatError(f"rule file is not ASCII text: {e}") from e
        return cls.from_text(text)


def embedded_rule() -> QuadratureRule:
    """The shipped 86-node reference rule for the default box, certified loosely."""
    text = (
        resources.files("specgp")
        .joinpath("data", EMBEDDED_RESOURCE)
        .read_text(encoding="ascii")
    )
    return QuadratureRule.from_text(text)


def resolve_rule(source: str) -> QuadratureRule:
    """Load ``"embedded"`` or a rule file path."""
    if source == "embedded":
        return embedded_rule()
    return QuadratureRule.load(source)
