"""Reference topologies and the Monte-Carlo sweep runner."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channels import generate_channel_set
from .config import ScenarioConfig, SolverSettings
from .core import NetworkDims, PhaseConstraint, dbm_to_watts, db_to_linear
from .optimizer import run

__all__ = [
    "SWEEP_VARIABLES",
    "RAW_COLUMNS",
    "SUMMARY_COLUMNS",
    "SweepSpec",
    "SweepResult",
    "scenario_fig4",
    "scenario_fig7",
    "apply_sweep_value",
    "trial_seed",
    "run_cell",
    "run_sweep",
]

log = logging.getLogger(__name__)

SWEEP_VARIABLES = (
    "user_distance_L",
    "bs_power",
    "bs_antennas_M",
    "user_antennas_U",
    "ris_elements_N",
)
RAW_COLUMNS = (
    "scenario", "variant", "sweep_var", "sweep_value", "trial", "seed",
    "wsr", "iterations", "converged", "runtime_s",
)
SUMMARY_COLUMNS = (
    "scenario", "variant", "sweep_var", "sweep_value", "trials", "failed", "mean_wsr", "stderr_wsr",
)

NOISE_DBM = -120.0
_USER_STREAM = 0x5EED


def _user_cluster(center, count: int, radius: float, seed: int) -> np.ndarray:
    # uniform in a disc; its own stream so channel draws stay untouched
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_USER_STREAM,)))
    r = radius * np.sqrt(rng.random(count))
    phi = 2 * np.pi * rng.random(count)
    return np.asarray(center, float) + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


def scenario_fig4(
    L: float = 25.0,
    seed: int = 0,
    *,
    constraint: PhaseConstraint = PhaseConstraint(),
    solver: SolverSettings = SolverSettings(),
) -> ScenarioConfig:
    """Two BSs, two RISs and four users clustered around ``(L, 0)``.

    BSs sit at (0, -20) and (80, -20), RISs at (30, 3) and (50, 3). The
    users are drawn uniformly in a 1 m disc from ``seed``, which also
    seeds the channels.
    """
    if not L > 0:
        raise ValueError("L must be > 0")
    dims = NetworkDims(B=2, R=2, K=4, M=8, U=2, N=32, P=6)
    return ScenarioConfig(
        dims=dims,
        bs_positions=[[0.0, -20.0], [80.0, -20.0]],
        ris_positions=[[30.0, 3.0], [50.0, 3.0]],
        user_positions=_user_cluster((L, 0.0), dims.K, 1.0, seed),
        p_max=float(db_to_linear(0.0)),
        noise_power=float(dbm_to_watts(NOISE_DBM)),
        constraint=constraint,
        seed=int(seed),
        solver=solver,
        name="fig4",
        meta={"scenario": "fig4", "L": float(L)},
    )


def scenario_fig7(
    seed: int = 0,
    *,
    K: int = 4,
    radius: float = 15.0,
    user_offset: float = math.pi / 8,
    constraint: PhaseConstraint = PhaseConstraint(),
    solver: SolverSettings = SolverSettings(),
) -> ScenarioConfig:
    """BSs at (±10, 0) inside a circle of eight RISs and ``K`` users.

    RIS ``r`` sits at angle ``2πr/8`` and user ``k`` at
    ``2πk/K + user_offset`` on the same circle of ``radius`` meters.
    """
    R = 8
    ris_angles = 2 * np.pi * np.arange(R) / R
    user_angles = 2 * np.pi * np.arange(K) / K + user_offset
    on_circle = lambda a: radius * np.stack([np.cos(a), np.sin(a)], axis=1)  # noqa: E731
    dims = NetworkDims(B=2, R=R, K=K, M=8, U=2, N=32, P=6)
    return ScenarioConfig(
        dims=dims,
        bs_positions=[[-10.0, 0.0], [10.0, 0.0]],
        ris_positions=on_circle(ris_angles),
        user_positions=on_circle(user_angles),
        p_max=float(db_to_linear(-10.0)),
        noise_power=float(dbm_to_watts(NOISE_DBM)),
        constraint=constraint,
        seed=int(seed),
        solver=solver,
        name="fig7",
        meta={
            "scenario": "fig7",
            "radius": float(radius),
            "user_angles": user_angles.tolist(),
            "ris_angles": ris_angles.tolist(),
        },
    )


@dataclass(frozen=True)
class SweepSpec:
    """One parameter sweep.

    ``variants`` holds constraint strings (``f1``, ``f2``, ``f3:L``) and
    ``noris`` for the network without surfaces. ``bs_power`` values are in
    dBW.
    """

    variable: str
    values: tuple
    trials: int = 1
    variants: tuple = ("f1",)
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "variants", tuple(str(v).lower() for v in self.variants))
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}; pick one of {SWEEP_VARIABLES}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if int(self.trials) < 1:
            raise ValueError("trials must be ≥ 1")
        if not self.variants:
            raise ValueError("sweep needs at least one variant")
        for v in self.variants:
            if v != "noris":
                PhaseConstraint.parse(v)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        return cls(
            variable=data["variable"],
            values=data["values"],
            trials=int(data.get("trials", 1)),
            variants=data.get("variants", ("f1",)),
            master_seed=int(data.get("seed", data.get("master_seed", 0))),
        )

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "values": list(self.values),
            "trials": self.trials,
            "variants": list(self.variants),
            "seed": self.master_seed,
        }


def trial_seed(master_seed: int, trial: int) -> int:
    """Channel seed of a trial, shared by every variant and sweep value."""
    return int(np.random.SeedSequence([int(master_seed), int(trial)]).generate_state(1, np.uint64)[0])


def apply_sweep_value(base: ScenarioConfig, variable: str, value, seed: int) -> ScenarioConfig:
    """Copy of ``base`` with one swept parameter set and channels reseeded."""
    if variable == "user_distance_L":
        if base.meta.get("scenario") != "fig4":
            raise ValueError("user_distance_L applies to the fig4 topology only")
        return scenario_fig4(float(value), seed, constraint=base.constraint, solver=base.solver)
    if base.meta.get("scenario") == "fig4":
        # fig4 user positions follow the trial seed as well
        cfg = scenario_fig4(base.meta["L"], seed, constraint=base.constraint, solver=base.solver)
        cfg = cfg.replace(dims=base.dims, p_max=base.p_max, noise_power=base.noise_power,
                          user_weights=base.user_weights, rician=base.rician, pathloss=base.pathloss)
    else:
        cfg = base.replace(seed=int(seed))
    if variable == "bs_power":
        return cfg.replace(p_max=np.full(cfg.dims.B, float(db_to_linear(value))))
    field_name = {"bs_antennas_M": "M", "user_antennas_U": "U", "ris_elements_N": "N"}[variable]
    return cfg.replace(dims=cfg.dims.replace(**{field_name: int(value)}))


def run_cell(base: ScenarioConfig, variable: str | None, value, variant: str, trial: int, seed: int,
             timing: bool = False) -> dict:
    """Run one (value, variant, trial) cell; failures become error rows.

    With ``variable=None`` the base config is run as is (its own seed and
    geometry) and the sweep columns stay empty.
    """
    row = {
        "scenario": base.name,
        "variant": variant,
        "sweep_var": "" if variable is None else variable,
        "sweep_value": "" if variable is None else value,
        "trial": trial,
        "seed": seed,
    }
    t0 = time.perf_counter()
    try:
        cfg = base if variable is None else apply_sweep_value(base, variable, value, seed)
        cs = generate_channel_set(cfg)
        if variant == "noris":
            cfg = cfg.replace(constraint=PhaseConstraint())
            cs = cs.without_ris()
        else:
            cfg = cfg.replace(constraint=PhaseConstraint.parse(variant))
        result = run(cfg, cs)
        row.update(
            wsr=result.report.wsr,
            iterations=result.trace.iterations,
            converged=result.trace.converged,
        )
    except Exception as exc:  # recorded, sweep goes on
        log.warning("cell %s=%s %s trial %d failed: %s", variable, value, variant, trial, exc)
        row.update(wsr=float("nan"), iterations=0, converged="error")
    row["runtime_s"] = round(time.perf_counter() - t0, 6) if timing else ""
    return row


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[dict]
    summary: list[dict] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if r["converged"] == "error")

    def mean(self, variant: str) -> np.ndarray:
        """Mean WSR per sweep value for one variant, in value order."""
        by = {(s["variant"], s["sweep_value"]): s["mean_wsr"] for s in self.summary}
        return np.array([by[(variant, v)] for v in self.spec.values])

    def stderr(self, variant: str) -> np.ndarray:
        by = {(s["variant"], s["sweep_value"]): s["stderr_wsr"] for s in self.summary}
        return np.array([by[(variant, v)] for v in self.spec.values])

    def wsr_table(self, variant: str) -> np.ndarray:
        """``(len(values), trials)`` array of final WSR values."""
        index = {v: i for i, v in enumerate(self.spec.values)}
        out = np.full((len(self.spec.values), self.spec.trials), np.nan)
        for r in self.rows:
            if r["variant"] == variant:
                out[index[r["sweep_value"]], r["trial"]] = r["wsr"]
        return out

    def write(self, out_path, json_mirror: bool = False) -> None:
        out_path = Path(out_path)
        _write_csv(out_path, RAW_COLUMNS, self.rows)
        _write_csv(summary_path(out_path), SUMMARY_COLUMNS, self.summary)
        if json_mirror:
            out_path.with_suffix(".json").write_text(
                json.dumps({"spec": self.spec.to_dict(), "rows": self.rows, "summary": self.summary},
                           indent=2, default=_json_default)
            )


def summary_path(out_path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.stem + ".summary.csv")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for r in rows:
            writer.writerow({c: (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in columns})


def _summarize(spec: SweepSpec, scenario: str, rows: list[dict]) -> list[dict]:
    out = []
    for value in spec.values:
        for variant in spec.variants:
            cell = [r for r in rows if r["sweep_value"] == value and r["variant"] == variant]
            vals = np.array([r["wsr"] for r in cell if r["converged"] != "error"], float)
            n = vals.size
            out.append({
                "scenario": scenario,
                "variant": variant,
                "sweep_var": spec.variable,
                "sweep_value": value,
                "trials": n,
                "failed": len(cell) - n,
                "mean_wsr": float(vals.mean()) if n else float("nan"),
                "stderr_wsr": float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
            })
    return out


def run_sweep(
    spec: SweepSpec,
    base: ScenarioConfig,
    out_path=None,
    *,
    n_jobs: int = 1,
    timing: bool = False,
    json_mirror: bool = False,
) -> SweepResult:
    """Run every value × variant × trial cell and average over trials.

    Each trial draws its channels (and, for fig4, user positions) from
    :func:`trial_seed`, so variants and sweep values see paired
    realizations. Rows come out in (value, variant, trial) order whatever
    ``n_jobs`` is. ``runtime_s`` stays empty unless ``timing`` is set,
    which keeps repeated sweeps byte-identical.
    """
    cells = [
        (value, variant, trial, trial_seed(spec.master_seed, trial))
        for value in spec.values
        for variant in spec.variants
        for trial in range(spec.trials)
    ]
    if n_jobs == 1:
        rows = [run_cell(base, spec.variable, v, var, t, s, timing) for v, var, t, s in cells]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(
            delayed(run_cell)(base, spec.variable, v, var, t, s, timing) for v, var, t, s in cells
        )
    result = SweepResult(spec, list(rows), _summarize(spec, base.name, rows))
    if out_path is not None:
        result.write(out_path, json_mirror)
    return result
