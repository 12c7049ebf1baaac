"""Alternating joint precoding: ρ, ξ, W, ϖ, Θ updates until the sum-rate settles."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channels import ChannelSet
from .config import ScenarioConfig, SolverSettings
from .core import PhaseConfig, PhaseConstraint, PrecoderStack, db_to_linear
from .fp import (
    assemble_active,
    assemble_passive,
    update_mu,
    update_rho,
    update_varpi,
    update_xi,
)
from .metrics import RateReport, ratio_matrix, wsr
from .qcqp import EllipsoidNotConverged, solve_active, solve_passive

__all__ = [
    "MonotonicityError",
    "IterationRecord",
    "OptimizerTrace",
    "RunResult",
    "initialize",
    "initial_point",
    "optimize",
    "run",
]

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-9
# drops up to this relative size are surrogate roundoff; bigger ones are bugs
ROUNDOFF_DROP = 1e-6


class MonotonicityError(RuntimeError):
    """The sum-rate fell under the ideal constraint set, which the updates rule out."""


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    wsr: float
    active_objective: float
    passive_objective: float
    power_residual: float
    phase_residual: float
    active_dual_iter: int
    passive_dual_iter: int
    dual_converged: bool
    w_accepted: bool
    theta_accepted: bool
    time_s: float


@dataclass
class OptimizerTrace:
    """Per-iteration history of one run.

    ``wsr0`` is the sum-rate at the initial point; record ``t`` holds the
    state after outer iteration ``t``. ``active_objective`` is the weighted
    ratio sum ``Σ μ f`` right after the W step and ``passive_objective``
    the same quantity after the Θ step.
    """

    wsr0: float = float("nan")
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    warmup_iterations: int = 0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def wsr(self) -> np.ndarray:
        return np.array([self.wsr0] + [r.wsr for r in self.records])

    def decreases(self, slack: float = MONOTONE_SLACK) -> list[int]:
        """Iterations whose sum-rate fell below the previous one."""
        w = self.wsr
        return [t for t in range(1, len(w)) if w[t] < w[t - 1] - slack * max(1.0, abs(w[t - 1]))]

    def to_csv(self, path) -> None:
        names = [f.name for f in dataclasses.fields(IterationRecord)]
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            writer.writerow([0, self.wsr0] + [""] * (len(names) - 2))
            for rec in self.records:
                writer.writerow([getattr(rec, n) for n in names])


@dataclass(frozen=True)
class RunResult:
    W: PrecoderStack
    theta: PhaseConfig
    report: RateReport
    trace: OptimizerTrace

    def __iter__(self):
        return iter((self.W, self.theta, self.report, self.trace))


def initial_point(
    cs: ChannelSet,
    p_max,
    constraint: PhaseConstraint = PhaseConstraint(),
    power_fraction: float = 1.0,
    rng=None,
) -> tuple[PrecoderStack, PhaseConfig]:
    """Random starting point.

    Every (BS, subcarrier, user) slice of W gets the same power, the slices
    of BS ``b`` add up to ``power_fraction * p_max[b]``, and entries carry
    i.i.d. uniform phases. θ is drawn uniformly from the constraint set:
    the unit disk for F1, the unit circle for F2, the grid for F3.
    """
    d = cs.dims
    rng = np.random.default_rng(rng)
    p_max = np.broadcast_to(np.asarray(p_max, float), (d.B,))
    amp = np.sqrt(power_fraction * p_max / (d.P * d.K * d.M))  # per entry, (B,)
    phases = np.exp(2j * np.pi * rng.random((d.P, d.K, d.B, d.M)))
    W0 = PrecoderStack.from_blocks(amp[None, None, :, None] * phases)

    n = d.R * d.N
    if constraint.kind == "F1":
        theta = np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    elif constraint.kind == "F2":
        theta = np.exp(2j * np.pi * rng.random(n))
    else:
        theta = constraint.grid[rng.integers(0, constraint.levels, n)]
    return W0, PhaseConfig(theta, constraint)


def initialize(config: ScenarioConfig, cs: ChannelSet, rng=None) -> tuple[PrecoderStack, PhaseConfig]:
    """:func:`initial_point` driven by the budget and seed of ``config``."""
    return initial_point(
        cs,
        config.p_max,
        config.constraint,
        config.solver.init_power_fraction,
        config.seed if rng is None else rng,
    )


def _clip_power(W: PrecoderStack, p_max: np.ndarray) -> PrecoderStack:
    # scale down BS slices that overshoot by the dual tolerance
    power = W.bs_power()
    factor = np.where(power > p_max, np.sqrt(p_max / np.maximum(power, np.finfo(float).tiny)), 1.0)
    if np.all(factor == 1.0):
        return W
    blocks = W.blocks() * factor[None, None, :, None]
    return PrecoderStack.from_blocks(blocks)


def _fill_power(W: PrecoderStack, p_max: np.ndarray) -> PrecoderStack:
    # a common scale factor raises every SINR, so use the whole tightest budget
    power = W.bs_power()
    if not np.any(power > 0):
        return W
    c = float(np.sqrt(np.min(np.where(power > 0, p_max / np.maximum(power, np.finfo(float).tiny), np.inf))))
    if not c > 1.0:
        return W
    return PrecoderStack(W.w * c, W.B, W.M, W.P, W.K)


def _active_step(cs: ChannelSet, theta, W, mu, noise: float, p_max, s: SolverSettings):
    # one W update with the surrogate safeguard and, optionally, the power fill
    xi = update_xi(cs, theta, W, mu, noise)
    qa = assemble_active(cs, theta, xi, mu, noise, p_max)
    W_new, _, state = solve_active(qa, s.dual_tol, s.max_dual_iter, strict=s.strict_dual)
    W_new = _clip_power(W_new, p_max)
    ok = qa.objective(W_new) >= qa.objective(W)
    if ok:
        W = W_new
    if s.extrapolate:
        W = _fill_power(W, p_max)
    return W, ok, state


def _lifted_lookahead(cs: ChannelSet, theta: PhaseConfig, W, rate, eta, noise: float, p_max, s):
    """Try unit-modulus phases followed by one W update; keep them only if the sum-rate rises.

    At high SINR the relaxed Θ step tends to shrink the reflection
    magnitudes and the alternation then crawls. Moving both blocks at once
    escapes that point without giving up monotonicity.
    """
    mag = np.abs(theta.theta)
    if np.all(np.abs(mag - 1.0) < 1e-12):
        return W, theta, rate
    lifted = PhaseConfig(np.where(mag > 0, theta.theta / np.where(mag > 0, mag, 1.0), 1.0), theta.constraint)
    mu = update_mu(update_rho(cs, lifted, W, noise), eta)
    try:
        W_l, _, _ = _active_step(cs, lifted, W, mu, noise, p_max, s)
    except EllipsoidNotConverged:
        return W, theta, rate
    cand = wsr(cs, lifted, W_l, eta, noise)
    if cand.wsr > rate.wsr:
        return W_l, lifted, cand
    return W, theta, rate


def run(
    config: ScenarioConfig,
    cs: ChannelSet,
    *,
    W0: PrecoderStack | None = None,
    theta0: PhaseConfig | None = None,
    rng=None,
) -> RunResult:
    """Optimize the precoders of ``cs`` with the settings of ``config``."""
    if W0 is None or theta0 is None:
        W_init, th_init = initialize(config, cs, rng)
        W0 = W_init if W0 is None else W0
        theta0 = th_init if theta0 is None else theta0
    return optimize(
        cs,
        p_max=config.p_max,
        noise_power=config.noise_power,
        weights=config.user_weights,
        constraint=config.constraint,
        solver=config.solver,
        W0=W0,
        theta0=theta0,
    )


def optimize(
    cs: ChannelSet,
    p_max,
    noise_power: float,
    weights=None,
    constraint: PhaseConstraint = PhaseConstraint(),
    solver: SolverSettings = SolverSettings(),
    *,
    W0: PrecoderStack | None = None,
    theta0: PhaseConfig | None = None,
    rng=None,
) -> RunResult:
    """Alternate the closed-form and QCQP updates until the sum-rate settles.

    Each outer iteration updates ρ, ξ, W, ϖ and Θ in that order, then
    evaluates the sum-rate. The loop stops when ``|ΔR| / R < rel_tol`` or
    after ``max_outer`` iterations. Under F1 a step is kept only if it does
    not lower its own surrogate, so the sum-rate never decreases. Under
    F2/F3 the quantized phases may lower it; the best feasible pair seen (after either block update) is
    returned.

    Parameters
    ----------
    cs : ChannelSet
        Channels; ``cs.dims.R == 0`` skips the RIS steps.
    p_max : float or array_like
        Per-BS power budget in watts.
    noise_power : float
        Noise power per receive antenna in watts.
    weights : array_like, optional
        User weights, ones by default.
    W0, theta0 : optional
        Starting point; missing parts come from :func:`initial_point`.
    """
    d = cs.dims
    s = solver
    noise = float(noise_power)
    eta = np.ones(d.K) if weights is None else np.asarray(weights, float)
    p_max = np.broadcast_to(np.asarray(p_max, float), (d.B,)).copy()
    con = constraint
    has_ris = d.R > 0

    if W0 is None or theta0 is None:
        W_init, th_init = initial_point(cs, p_max, con, s.init_power_fraction, rng)
        W0 = W_init if W0 is None else W0
        theta0 = th_init if theta0 is None else theta0
    warmup_its = 0
    if s.warmup_noise_db > 0:
        warm = optimize(
            cs, p_max, noise * float(db_to_linear(s.warmup_noise_db)), eta, con,
            dataclasses.replace(s, warmup_noise_db=0.0, max_outer=s.warmup_max_outer),
            W0=W0, theta0=theta0,
        )
        W0, theta0 = warm.W, warm.theta
        warmup_its = warm.trace.iterations
    W, theta = W0, theta0
    if not has_ris:
        theta = PhaseConfig(np.zeros(0, complex), con, check=False)

    trace = OptimizerTrace(warmup_iterations=warmup_its)
    rate = wsr(cs, theta, W, eta, noise)
    trace.wsr0 = rate.wsr
    best = (rate.wsr, W, theta, rate)
    chi = None
    prev = rate.wsr

    for it in range(1, s.max_outer + 1):
        t0 = time.perf_counter()
        start = (W, theta, rate)
        try:
            rho = update_rho(cs, theta, W, noise)
            mu = update_mu(rho, eta)

            W, w_ok, astate = _active_step(cs, theta, W, mu, noise, p_max, s)
            if con.kind != "F1":
                # (new W, old Θ) is feasible too and often the better pair
                mid = wsr(cs, theta, W, eta, noise)
                if mid.wsr > best[0]:
                    best = (mid.wsr, W, theta, mid)
            active_val = float(np.sum(mu * ratio_matrix(cs, theta, W, noise)))

            # passive step
            th_ok = True
            pdual_iter = 0
            pdual_ok = True
            if has_ris:
                varpi = update_varpi(cs, theta, W, mu, noise)
                qp = assemble_passive(cs, W, varpi, mu, noise)
                th_new, pstate = solve_passive(
                    qp, con, s.dual_tol, s.max_dual_iter,
                    method=s.passive_method, chi0=chi, return_dual=True, strict=s.strict_dual,
                )
                pdual_iter = pstate.iterations
                pdual_ok = pstate.converged
                if pstate.x.size and np.any(pstate.x > 0):
                    chi = pstate.x
                if con.kind == "F1":
                    th_ok = qp.objective(th_new) >= qp.objective(theta)
                if th_ok:
                    theta = th_new
            passive_val = float(np.sum(mu * ratio_matrix(cs, theta, W, noise)))
        except EllipsoidNotConverged as exc:
            raise EllipsoidNotConverged(f"outer iteration {it}: {exc}", exc.state) from exc

        rate = wsr(cs, theta, W, eta, noise)
        if has_ris and s.extrapolate and con.kind == "F1":
            W, theta, rate = _lifted_lookahead(cs, theta, W, rate, eta, noise, p_max, s)
        stalled = False
        if con.kind == "F1" and prev - ROUNDOFF_DROP * max(1.0, abs(prev)) <= rate.wsr < prev:
            # at large μ the surrogates lose the last digits; keep the old pair and stop
            W, theta, rate = start
            w_ok = th_ok = False
            stalled = True
        power = W.bs_power()
        trace.records.append(
            IterationRecord(
                iteration=it,
                wsr=rate.wsr,
                active_objective=active_val,
                passive_objective=passive_val,
                power_residual=float(np.max((power - p_max) / p_max)),
                phase_residual=float(np.max(con.violation(theta.theta), initial=0.0)),
                active_dual_iter=astate.iterations,
                passive_dual_iter=pdual_iter,
                dual_converged=bool(astate.converged and pdual_ok),
                w_accepted=bool(w_ok),
                theta_accepted=bool(th_ok),
                time_s=time.perf_counter() - t0,
            )
        )
        if con.kind == "F1" and rate.wsr < prev - MONOTONE_SLACK * max(1.0, abs(prev)):
            raise MonotonicityError(
                f"sum-rate fell from {prev!r} to {rate.wsr!r} at outer iteration {it}"
            )
        if rate.wsr > best[0]:
            best = (rate.wsr, W, theta, rate)
        change = abs(rate.wsr - prev) / max(abs(prev), np.finfo(float).tiny)
        log.debug("iteration %d: wsr=%.6g change=%.3g", it, rate.wsr, change)
        prev = rate.wsr
        if change < s.rel_tol or stalled:
            trace.converged = True
            break

    if con.kind == "F1":
        return RunResult(W, theta, rate, trace)
    _, W, theta, rate = best
    return RunResult(W, theta, rate, trace)
