"""Scenario description with validation and a JSON round-trip."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .core import NetworkDims, PhaseConstraint

__all__ = [
    "PathLossParams",
    "RicianFactors",
    "SolverSettings",
    "ScenarioConfig",
    "validate",
    "load_config",
    "save_config",
]


@dataclass(frozen=True)
class PathLossParams:
    """Large-scale fading. Gains are the dB composites C·G_B·G_u."""

    direct_gain_db: float = -30.0
    reflected_gain_db: float = -40.0
    kappa_bu: float = 3.0
    kappa_br: float = 2.0
    kappa_ru: float = 2.0


@dataclass(frozen=True)
class RicianFactors:
    bs_ris: float = math.inf
    bs_user: float = 0.0
    ris_user: float = 0.0


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration caps for the alternating optimizer.

    ``max_dual_iter=None`` lets the dual solvers size their own budget from
    the dimension and the initial ellipsoid radius. ``extrapolate`` adds two
    sum-rate-nondecreasing moves: W is scaled up to the tightest budget
    after its step, and under F1 the unit-modulus lift of Θ followed by one
    more W step is tried at the end of each iteration and kept only if the
    sum-rate rises. At high SNR the plain updates drift into the interior
    and recover only slowly. With ``strict_dual`` off, a dual solve that stalls
    above ``dual_tol`` hands back its best point, which is then projected
    onto the feasible set and passed through the usual safeguards.

    ``warmup_noise_db > 0`` (the default) first runs at most ``warmup_max_outer``
    iterations with the noise raised by that many dB and starts the real
    run from the result. The raised-noise problem has far fewer poor
    stationary points, so this is a cheap continuation step when the
    nominal SNR is very high. Set it to 0 for the plain alternation.
    """

    rel_tol: float = 1e-3
    max_outer: int = 100
    dual_tol: float = 1e-7
    max_dual_iter: int | None = None
    passive_method: str = "auto"
    init_power_fraction: float = 1.0
    extrapolate: bool = True
    strict_dual: bool = False
    warmup_noise_db: float = 60.0
    warmup_max_outer: int = 10

    @classmethod
    def coarse(cls, **changes) -> "SolverSettings":
        """Stop once the sum-rate moves by less than 2% between iterations."""
        return cls(**{"rel_tol": 2e-2, **changes})


def _frozen_array(value, shape_tail=None, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    if shape_tail is not None:
        arr = arr.reshape((-1,) + shape_tail)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Everything needed to generate channels and run the optimizer.

    Powers are linear watts. Positions are planar coordinates in meters.
    """

    dims: NetworkDims
    bs_positions: Any
    ris_positions: Any
    user_positions: Any
    p_max: Any
    noise_power: float
    user_weights: Any = None
    rician: RicianFactors = field(default_factory=RicianFactors)
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    constraint: PhaseConstraint = field(default_factory=PhaseConstraint)
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "bs_positions", _frozen_array(self.bs_positions, (2,)))
        set_(self, "ris_positions", _frozen_array(self.ris_positions, (2,)))
        set_(self, "user_positions", _frozen_array(self.user_positions, (2,)))
        p_max = np.array(self.p_max, dtype=float)
        if p_max.ndim == 0:
            p_max = np.full(self.dims.B, float(p_max))
        set_(self, "p_max", _frozen_array(p_max))
        weights = self.user_weights
        if weights is None:
            weights = np.ones(self.dims.K)
        set_(self, "user_weights", _frozen_array(weights))
        set_(self, "noise_power", float(self.noise_power))
        set_(self, "meta", dict(self.meta))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # distances -------------------------------------------------------
    def distances_bs_user(self) -> np.ndarray:
        return _pairwise(self.bs_positions, self.user_positions)

    def distances_bs_ris(self) -> np.ndarray:
        return _pairwise(self.bs_positions, self.ris_positions)

    def distances_ris_user(self) -> np.ndarray:
        return _pairwise(self.ris_positions, self.user_positions)

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dims": dataclasses.asdict(self.dims),
            "bs_positions": self.bs_positions.tolist(),
            "ris_positions": self.ris_positions.tolist(),
            "user_positions": self.user_positions.tolist(),
            "p_max": self.p_max.tolist(),
            "noise_power": self.noise_power,
            "user_weights": self.user_weights.tolist(),
            "rician": {k: _encode_float(v) for k, v in dataclasses.asdict(self.rician).items()},
            "pathloss": dataclasses.asdict(self.pathloss),
            "constraint": str(self.constraint),
            "seed": int(self.seed),
            "solver": dataclasses.asdict(self.solver),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return cls(
            dims=NetworkDims(**data["dims"]),
            bs_positions=data["bs_positions"],
            ris_positions=data.get("ris_positions") or np.zeros((0, 2)),
            user_positions=data["user_positions"],
            p_max=data["p_max"],
            noise_power=data["noise_power"],
            user_weights=data.get("user_weights"),
            rician=RicianFactors(**{k: _decode_float(v) for k, v in data.get("rician", {}).items()}),
            pathloss=PathLossParams(**data.get("pathloss", {})),
            constraint=PhaseConstraint.parse(data.get("constraint", "f1")),
            seed=int(data.get("seed", 0)),
            solver=SolverSettings(**data.get("solver", {})),
            name=data.get("name", "custom"),
            meta=data.get("meta", {}),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def _encode_float(x: float):
    return "inf" if math.isinf(x) else x


def _decode_float(x) -> float:
    return float(x)


def save_config(config: ScenarioConfig, path) -> None:
    Path(path).write_text(config.to_json(indent=2))


def load_config(path) -> ScenarioConfig:
    return ScenarioConfig.from_json(Path(path).read_text())


def validate(config: ScenarioConfig) -> list[str]:
    """Return every violated invariant; an empty list means runnable."""
    d = config.dims
    report = d.problems()
    if report:
        return report

    for label, arr, count in (
        ("bs_positions", config.bs_positions, d.B),
        ("ris_positions", config.ris_positions, d.R),
        ("user_positions", config.user_positions, d.K),
    ):
        if arr.shape != (count, 2):
            report.append(f"{label} must have shape ({count}, 2), got {arr.shape}")
        elif not np.all(np.isfinite(arr)):
            report.append(f"{label} must be finite")
    if config.p_max.shape != (d.B,):
        report.append(f"p_max must have length B={d.B}")
    elif not np.all(config.p_max > 0):
        report.append("p_max entries must be > 0")
    if not config.noise_power > 0:
        report.append("noise_power must be > 0")
    if config.user_weights.shape != (d.K,):
        report.append(f"user_weights must have length K={d.K}")
    elif not np.all(config.user_weights > 0):
        report.append("user_weights must be > 0")

    pl = config.pathloss
    for name in ("kappa_bu", "kappa_br", "kappa_ru"):
        if not getattr(pl, name) > 0:
            report.append(f"path-loss exponent {name} must be > 0")
    for name, value in dataclasses.asdict(config.rician).items():
        if not value >= 0:
            report.append(f"Rician factor {name} must be ≥ 0 or inf")

    s = config.solver
    if not s.rel_tol > 0:
        report.append("solver.rel_tol must be > 0")
    if not s.dual_tol > 0:
        report.append("solver.dual_tol must be > 0")
    if s.max_outer < 1:
        report.append("solver.max_outer must be ≥ 1")
    if s.passive_method not in ("auto", "ellipsoid", "newton"):
        report.append("solver.passive_method must be auto, ellipsoid or newton")
    if not s.warmup_noise_db >= 0:
        report.append("solver.warmup_noise_db must be ≥ 0")
    if s.warmup_max_outer < 1:
        report.append("solver.warmup_max_outer must be ≥ 1")
    if not 0 < s.init_power_fraction <= 1:
        report.append("solver.init_power_fraction must lie in (0, 1]")

    if report:
        return report
    for label, dist in (
        ("BS-user", config.distances_bs_user()),
        ("BS-RIS", config.distances_bs_ris()),
        ("RIS-user", config.distances_ris_user()),
    ):
        if dist.size and not np.all(dist > 0):
            report.append(f"{label} distances must be > 0")
    return report
