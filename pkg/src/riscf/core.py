"""Value types for dimensions, precoders and phase shifts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetworkDims",
    "PhaseConstraint",
    "PrecoderStack",
    "PhaseConfig",
    "dbm_to_watts",
    "db_to_linear",
    "linear_to_db",
]

UNIT_MODULUS_ATOL = 1e-9


def dbm_to_watts(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class NetworkDims:
    """Network sizes.

    B BSs with M antennas, R RISs with N elements, K users with U antennas,
    P subcarriers. ``R = 0`` is the conventional cell-free network.
    """

    B: int
    R: int
    K: int
    M: int
    U: int
    N: int
    P: int

    def problems(self) -> list[str]:
        out = []
        for name in ("B", "K", "M", "U", "N", "P"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                out.append(f"{name} must be ≥ 1 (got {value!r})")
        if not isinstance(self.R, (int, np.integer)) or self.R < 0:
            out.append(f"R must be ≥ 0 (got {self.R!r})")
        return out

    @property
    def precoder_size(self) -> int:
        return self.B * self.M * self.P * self.K

    @property
    def n_reflectors(self) -> int:
        return self.R * self.N

    def replace(self, **changes) -> "NetworkDims":
        values = {k: getattr(self, k) for k in ("B", "R", "K", "M", "U", "N", "P")}
        values.update(changes)
        return NetworkDims(**values)


@dataclass(frozen=True)
class PhaseConstraint:
    """Feasible set of the RIS reflection coefficients.

    ``F1``: |θ| ≤ 1. ``F2``: |θ| = 1. ``F3``: θ on the L-point phase grid.
    """

    kind: str = "F1"
    levels: int | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in ("F1", "F2", "F3"):
            raise ValueError(f"unknown phase constraint {self.kind!r}")
        if kind == "F3":
            if self.levels is None or int(self.levels) < 2:
                raise ValueError("F3 requires L ≥ 2 discrete phases")
            object.__setattr__(self, "levels", int(self.levels))
        elif self.levels is not None:
            raise ValueError(f"{kind} takes no phase levels")

    @classmethod
    def parse(cls, text: str) -> "PhaseConstraint":
        """Parse ``f1``, ``f2`` or ``f3:L``."""
        head, _, tail = text.strip().partition(":")
        if head.upper() == "F3":
            if not tail:
                raise ValueError("F3 needs a level count, e.g. 'f3:4'")
            return cls("F3", int(tail))
        if tail:
            raise ValueError(f"{head} takes no phase levels")
        return cls(head)

    def __str__(self) -> str:
        return f"f3:{self.levels}" if self.kind == "F3" else self.kind.lower()

    @property
    def grid(self) -> np.ndarray | None:
        if self.kind != "F3":
            return None
        return np.exp(2j * np.pi * np.arange(self.levels) / self.levels)

    def violation(self, theta) -> np.ndarray:
        """Per-element distance of ``theta`` from the feasible set."""
        theta = np.asarray(theta, dtype=complex)
        mag = np.abs(theta)
        if self.kind == "F1":
            return np.maximum(mag - 1.0, 0.0)
        if self.kind == "F2":
            return np.abs(mag - 1.0)
        return np.min(np.abs(theta[..., None] - self.grid), axis=-1)

    def contains(self, theta, atol: float = UNIT_MODULUS_ATOL) -> bool:
        return bool(np.all(self.violation(theta) <= atol))


@dataclass(frozen=True, eq=False)
class PrecoderStack:
    """Stacked active precoder.

    The flat vector is ordered subcarrier-major, then user, then BS, then
    antenna: ``w[((p*K + k)*B + b)*M + m]`` is antenna ``m`` of BS ``b``
    serving user ``k`` on subcarrier ``p``.
    """

    w: np.ndarray
    B: int
    M: int
    P: int
    K: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex).reshape(-1)
        if w.size != self.B * self.M * self.P * self.K:
            raise ValueError(
                f"precoder length {w.size} != B*M*P*K = {self.B * self.M * self.P * self.K}"
            )
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @classmethod
    def from_blocks(cls, blocks) -> "PrecoderStack":
        """Build from an array shaped ``(P, K, B, M)``."""
        blocks = np.asarray(blocks, dtype=complex)
        P, K, B, M = blocks.shape
        return cls(blocks.reshape(-1).copy(), B=B, M=M, P=P, K=K)

    @classmethod
    def zeros(cls, dims: NetworkDims) -> "PrecoderStack":
        return cls(np.zeros(dims.precoder_size, complex), dims.B, dims.M, dims.P, dims.K)

    def offset(self, b: int, p: int, k: int) -> int:
        if not (0 <= b < self.B and 0 <= p < self.P and 0 <= k < self.K):
            raise IndexError(f"(b={b}, p={p}, k={k}) out of range")
        return ((p * self.K + k) * self.B + b) * self.M

    def extract(self, b: int, p: int, k: int) -> np.ndarray:
        start = self.offset(b, p, k)
        return self.w[start:start + self.M]

    def blocks(self) -> np.ndarray:
        """Read-only view shaped ``(P, K, B, M)``."""
        return self.w.reshape(self.P, self.K, self.B, self.M)

    def per_stream(self) -> np.ndarray:
        """View shaped ``(P, K, B*M)``: row ``[p, k]`` is ``w_{p,k}``."""
        return self.w.reshape(self.P, self.K, self.B * self.M)

    def bs_power(self) -> np.ndarray:
        """Transmit power of every BS, summed over users and subcarriers."""
        return np.sum(np.abs(self.blocks()) ** 2, axis=(0, 1, 3))

    def __len__(self) -> int:
        return self.w.size


@dataclass(frozen=True, eq=False)
class PhaseConfig:
    """Reflection coefficients of all RIS elements, ``theta[r*N + n]``."""

    theta: np.ndarray
    constraint: PhaseConstraint = field(default_factory=PhaseConstraint)
    check: bool = True

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=complex).reshape(-1).copy()
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        if self.check and not self.constraint.contains(theta):
            worst = float(np.max(self.constraint.violation(theta), initial=0.0))
            raise ValueError(
                f"theta violates {self.constraint} by {worst:.3g}"
            )

    def __len__(self) -> int:
        return self.theta.size

    def block(self, R: int, N: int) -> np.ndarray:
        """Dense block-diagonal ``Θ = diag(Θ_1, …, Θ_R)``."""
        if self.theta.size != R * N:
            raise ValueError("theta length does not match R*N")
        return np.diag(self.theta)
