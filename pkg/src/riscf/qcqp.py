"""Lagrange-dual solvers for the active and passive QCQPs.

Both subproblems maximize a concave quadratic under separable quadratic
constraints, so strong duality holds and the primal optimum is the
closed-form maximizer of the Lagrangian at the optimal multipliers. The
multipliers are found with a central-cut ellipsoid method over the
nonnegative orthant. Large passive problems can instead use a projected
Newton method on the same smooth dual function.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .core import PhaseConfig, PhaseConstraint, PrecoderStack
from .fp import ActiveQcqp, PassiveQcqp

__all__ = [
    "EllipsoidNotConverged",
    "DualState",
    "ellipsoid_minimize",
    "dual_newton_minimize",
    "primal_w",
    "solve_active",
    "primal_theta",
    "solve_passive",
    "quantize_phases",
    "active_kkt",
    "passive_kkt",
]

log = logging.getLogger(__name__)

RIDGE = 1e-12
DEFAULT_TOL = 1e-7
ELLIPSOID_MAX_DIM = 8


class EllipsoidNotConverged(RuntimeError):
    def __init__(self, message, state: "DualState | None" = None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class DualState:
    """Dual point returned by a solver together with its certificate."""

    x: np.ndarray
    iterations: int
    violation: float
    slackness: float
    converged: bool
    center: np.ndarray | None = None
    shape: np.ndarray | None = None


def _surrogate(x: np.ndarray, slack: np.ndarray) -> tuple[float, float]:
    # slack_j >= 0 means constraint j holds; sum_j x_j * slack_j is the duality gap
    violation = float(np.max(-slack, initial=0.0))
    slackness = float(np.max(np.abs(x * slack), initial=0.0))
    return max(violation, 0.0), slackness


def default_max_iter(dim: int, init_radius: float, tol: float) -> int:
    return int(10 * dim * dim * max(1.0, math.log(max(init_radius, tol) / tol)) + 50)


def ellipsoid_minimize(
    oracle: Callable[[np.ndarray], np.ndarray],
    dim: int,
    init_radius: float,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    *,
    scale=None,
    strict: bool = True,
) -> DualState:
    """Minimize a convex dual function over ``x >= 0``.

    ``oracle(x)`` must return the gradient of the dual at a feasible
    ``x``; for a Lagrangian dual that is the vector of constraint slacks
    (``budget - usage``). Centers with a negative coordinate receive a
    feasibility cut instead. The search stops at the first feasible center
    whose largest constraint violation and largest complementary-slackness
    product, both divided by ``scale``, are at most ``tol``. The product
    ``x_j * slack_j`` is in objective units, so ``tol`` bounds the duality
    gap in absolute terms.

    In one dimension the ellipsoid is an interval and each cut halves it.
    Without ``strict`` an exhausted budget returns the best feasible
    center seen (``converged=False``) instead of raising.
    """
    if dim < 1:
        raise ValueError("dim must be ≥ 1")
    scale = np.ones(dim) if scale is None else np.broadcast_to(np.asarray(scale, float), (dim,))
    radius = float(init_radius)
    if not radius > 0:
        radius = 1.0
    if max_iter is None:
        max_iter = default_max_iter(dim, radius, tol)

    x = np.zeros(dim)
    Pm = np.eye(dim) * radius**2
    best = None
    for it in range(1, max_iter + 1):
        neg = np.flatnonzero(x < 0)
        if neg.size:
            j = neg[np.argmin(x[neg] / np.sqrt(np.diag(Pm))[neg])]
            g = np.zeros(dim)
            g[j] = -1.0
        else:
            slack = np.asarray(oracle(x), float)
            viol, cs = _surrogate(x, slack / scale)
            if best is None or max(viol, cs) < max(best.violation, best.slackness):
                best = DualState(x.copy(), it, viol, cs, False)
            if viol <= tol and cs <= tol:
                return DualState(x.copy(), it, viol, cs, True, x.copy(), Pm.copy())
            g = slack
        gPg = float(g @ Pm @ g)
        if not gPg > 0 or not np.isfinite(gPg):
            break
        if dim == 1:
            step = math.sqrt(Pm[0, 0]) / 2.0
            x = x - step * np.sign(g)
            Pm = Pm / 4.0
            continue
        Pg = Pm @ g / math.sqrt(gPg)
        x = x - Pg / (dim + 1)
        Pm = (dim * dim / (dim * dim - 1.0)) * (Pm - (2.0 / (dim + 1)) * np.outer(Pg, Pg))
        Pm = 0.5 * (Pm + Pm.T)

    if not strict and best is not None:
        return best
    raise EllipsoidNotConverged(
        f"ellipsoid method did not reach tol={tol:g} in {max_iter} iterations "
        f"(best violation {best.violation if best else float('nan'):.3g}, "
        f"slackness {best.slackness if best else float('nan'):.3g})",
        best,
    )


# ---------------------------------------------------------------------------
# active subproblem


def _active_ridge(q: ActiveQcqp) -> float:
    scale = float(np.real(np.trace(q.a, axis1=1, axis2=2)).mean()) / q.a.shape[-1] if q.a.size else 0.0
    return RIDGE * max(scale, np.finfo(float).tiny)


def _active_blocks(lam: np.ndarray, q: ActiveQcqp) -> np.ndarray:
    """System matrices ``a_p + diag(λ ⊗ 1_M) + εI``, one per subcarrier."""
    diag = np.repeat(np.asarray(lam, float), q.M) + _active_ridge(q)
    return q.a + diag[None, :, None] * np.eye(q.B * q.M)[None]


def primal_w(lam, q: ActiveQcqp) -> PrecoderStack:
    """Maximizer of the active Lagrangian at multipliers ``lam``.

    With the factors of :class:`ActiveQcqp` available, ``S = T T^H + D``
    with ``D`` diagonal, and ``D^{1/2} w`` is the ridge-regression solution
    for ``Ã = T^H D^{-1/2}``. It is computed from a thin SVD of ``Ã``,
    which stays accurate although ``a[p]`` is singular.
    """
    lam = np.asarray(lam, float).reshape(q.B)
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    if q.T is not None and q.coef is not None:
        # S = T T^H + D: with Ã = T^H D^{-1/2}, D^{1/2} W solves a ridge problem in Ã
        droot = np.sqrt(np.repeat(lam, q.M) + _active_ridge(q))
        At = np.swapaxes(q.T.conj(), 1, 2) / droot[None, None, :]  # (P, K, BM)
        U, sv, Vh = np.linalg.svd(At, full_matrices=False)
        filt = sv / (sv**2 + 1.0)
        cols = np.swapaxes(Vh.conj(), 1, 2) @ (filt[..., None] * (np.swapaxes(U.conj(), 1, 2) @ q.coef))
        cols = cols / droot[None, :, None]
    else:
        cols = np.linalg.solve(_active_blocks(lam, q), np.swapaxes(q.V, 1, 2))
    return PrecoderStack.from_blocks(np.swapaxes(cols, 1, 2).reshape(q.P, q.K, q.B, q.M))


def active_kkt(W, lam, q: ActiveQcqp) -> dict:
    """Relative KKT residuals of an active solution."""
    W = W if isinstance(W, PrecoderStack) else PrecoderStack(np.asarray(W).reshape(-1), q.B, q.M, q.P, q.K)
    lam = np.asarray(lam, float)
    w = W.per_stream()
    lhs = np.einsum("pxy,pky->pkx", q.a, w) + np.repeat(lam, q.M)[None, None, :] * w
    vnorm = max(np.linalg.norm(q.V), np.finfo(float).tiny)
    power = q.bs_power(W)
    _, slackness = _surrogate(lam, (q.p_max - power) / q.p_max)
    return {
        "stationarity": float(np.linalg.norm(lhs - q.V) / vnorm),
        "primal": float(np.max((power - q.p_max) / q.p_max, initial=0.0)),
        "dual": float(np.max(-lam, initial=0.0)),
        "slackness": slackness,
    }


def solve_active(
    q: ActiveQcqp,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    *,
    strict: bool = True,
):
    """Globally solve the active QCQP. Returns ``(W, λ, DualState)``.

    The multipliers start at zero; if the unconstrained maximizer already
    fits every budget it is the answer. Otherwise the ellipsoid method runs
    from the origin inside a ball of radius ``2 ||V|| sqrt(ΣP) / min P``,
    which contains every optimal ``λ``.
    """
    W0 = primal_w(np.zeros(q.B), q)
    p0 = q.bs_power(W0)
    if np.all(p0 <= q.p_max * (1 + tol)):
        state = DualState(np.zeros(q.B), 1, float(np.max((p0 - q.p_max) / q.p_max, initial=0)), 0.0, True)
        return W0, np.zeros(q.B), state

    vnorm = float(np.linalg.norm(q.V))
    radius = 1.01 * 2.0 * vnorm * math.sqrt(float(np.sum(q.p_max))) / float(np.min(q.p_max)) + 1e-12

    def oracle(lam):
        return q.p_max - q.bs_power(primal_w(lam, q))

    state = ellipsoid_minimize(oracle, q.B, radius, tol, max_iter, scale=q.p_max, strict=strict)
    return primal_w(state.x, q), state.x, state


# ---------------------------------------------------------------------------
# passive subproblem


def _passive_ridge(q: PassiveQcqp) -> float:
    scale = float(np.real(np.trace(q.Lam))) / q.dim if q.dim else 0.0
    return RIDGE * max(scale, np.finfo(float).tiny)


def _passive_solve(chi: np.ndarray, q: PassiveQcqp):
    """``θ(χ)`` and a callable returning the dense ``S(χ)^{-1}``.

    With ``Λ = F F^H`` and ``ν = F z`` known, ``u = D^{1/2} θ`` minimizes
    ``||Ã u - z||^2 + ||u||^2`` for ``Ã = F^H D^{-1/2}``, ``D = diag(χ) + εI``.
    A thin SVD of ``Ã`` gives both ``u`` and
    ``S^{-1} = D^{-1/2} V diag(1/(s^2+1)) V^H D^{-1/2}`` (with ``V`` the
    full right singular basis, ``s = 0`` past the rank) without forming the
    ill-conditioned ``S``.
    """
    dvec = chi + _passive_ridge(q)
    if q.factor is not None and q.z is not None:
        droot = np.sqrt(dvec)
        At = q.factor.conj().T / droot[None, :]
        U, sv, Vh = np.linalg.svd(At, full_matrices=False)
        theta = (Vh.conj().T @ (sv / (sv**2 + 1.0) * (U.conj().T @ q.z))) / droot

        def inverse():
            # complete the right singular basis so no term is formed by cancellation
            _, _, Vfull = np.linalg.svd(At, full_matrices=True)
            f = np.ones(q.dim)
            f[: sv.size] = 1.0 / (sv**2 + 1.0)
            Vs = Vfull.conj().T / droot[:, None]
            return (Vs * f[None, :]) @ Vs.conj().T

        return theta, inverse

    S = q.Lam + np.diag(dvec)
    try:
        factor = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
        theta = scipy.linalg.cho_solve(factor, q.nu, check_finite=False)

        def inverse():
            return scipy.linalg.cho_solve(factor, np.eye(q.dim), check_finite=False)
    except np.linalg.LinAlgError:
        theta = scipy.linalg.solve(S, q.nu)

        def inverse():
            return np.linalg.inv(S)

    return theta, inverse


def primal_theta(chi, q: PassiveQcqp) -> np.ndarray:
    """Maximizer of the passive Lagrangian at multipliers ``chi``."""
    chi = np.asarray(chi, float).reshape(q.dim)
    if np.any(chi < 0):
        raise ValueError("multipliers must be nonnegative")
    if q.dim == 0:
        return np.zeros(0, complex)
    return _passive_solve(chi, q)[0]


def passive_kkt(theta, chi, q: PassiveQcqp) -> dict:
    theta = np.asarray(getattr(theta, "theta", theta), complex).reshape(-1)
    chi = np.asarray(chi, float)
    nnorm = max(np.linalg.norm(q.nu), np.finfo(float).tiny)
    slack = 1.0 - np.abs(theta) ** 2
    return {
        "stationarity": float(np.linalg.norm(q.Lam @ theta + chi * theta - q.nu) / nnorm),
        "primal": float(np.max(-slack, initial=0.0)),
        "dual": float(np.max(-chi, initial=0.0)),
        "slackness": _surrogate(chi, slack)[1],
    }


def _passive_radius(q: PassiveQcqp) -> float:
    return 1.01 * 2.0 * float(np.linalg.norm(q.nu)) * math.sqrt(q.dim) + 1e-12


def dual_newton_minimize(
    q: PassiveQcqp,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200,
    chi0=None,
    *,
    strict: bool = True,
) -> DualState:
    """Semismooth Newton method for the passive dual over ``χ >= 0``.

    The dual ``ν^H S(χ)^{-1} ν + Σχ`` has gradient ``1 - |θ(χ)|^2`` and
    Hessian ``H = 2 Re(conj(θ) θ^T ∘ S^{-1})``. Optimality is written as
    the complementarity system ``min(χ, c ψ) = 0`` with
    ``ψ = 1/|θ| - 1``, which has the same sign as the gradient but is
    close to affine in ``χ`` (the secular-equation trick of trust-region
    solvers). Each step fixes the coordinates with ``χ < c ψ`` at zero,
    solves the Newton equation on the rest and backtracks on the residual
    norm.

    The dual can be nearly flat along some directions, in which case the
    residual stops improving above ``tol``. The search then ends early; the
    best point seen is raised with :class:`EllipsoidNotConverged` when
    ``strict`` and returned with ``converged=False`` otherwise.
    """
    n = q.dim
    nu_norm = float(np.linalg.norm(q.nu))
    if chi0 is None:
        chi = np.full(n, nu_norm)
    else:
        chi = np.maximum(np.asarray(chi0, float).reshape(n), 0.0)
    tiny = np.finfo(float).tiny

    def psi(th):
        return 1.0 / np.maximum(np.abs(th), 1e-150) - 1.0

    theta, inverse = _passive_solve(chi, q)
    c = None
    best = None
    stalled = 0
    it = 0
    for it in range(1, max_iter + 1):
        grad = 1.0 - np.abs(theta) ** 2
        viol, cs = _surrogate(chi, grad)
        if viol <= tol and cs <= tol:
            return DualState(chi, it, viol, cs, True)
        if best is None or max(viol, cs) < max(best.violation, best.slackness):
            best = DualState(chi, it, viol, cs, False)
        if stalled >= 3:
            break
        mag = np.maximum(np.abs(theta), 1e-150)
        Sinv = inverse()
        H = 2.0 * np.real(np.conj(theta)[:, None] * Sinv * theta[None, :])
        J = H / (2.0 * mag**3)[:, None]
        if c is None:
            c = 1.0 / max(float(np.mean(np.diag(J))), tiny)
        ps = psi(theta)
        res = np.minimum(chi, c * ps)
        pinned = chi < c * ps
        free = ~pinned
        step = np.zeros(n)
        step[pinned] = -chi[pinned]
        if free.any():
            rhs = -ps[free] - J[np.ix_(free, pinned)] @ step[pinned]
            Jf = J[np.ix_(free, free)]
            try:
                # near-flat duals make Jf ill conditioned; the line search guards the step
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                    step[free] = scipy.linalg.solve(Jf, rhs)
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                step[free] = np.linalg.lstsq(Jf, rhs, rcond=None)[0]
        norm0 = float(np.linalg.norm(res))
        alpha = 1.0
        for _ in range(40):
            trial = np.maximum(chi + alpha * step, 0.0)
            ttheta, tinverse = _passive_solve(trial, q)
            if np.linalg.norm(np.minimum(trial, c * psi(ttheta))) <= (1.0 - 1e-4 * alpha) * norm0:
                break
            alpha *= 0.5
        stalled = stalled + 1 if alpha < 1e-8 else 0
        chi, theta, inverse = trial, ttheta, tinverse

    grad = 1.0 - np.abs(theta) ** 2
    viol, cs = _surrogate(chi, grad)
    if viol <= tol and cs <= tol:
        return DualState(chi, it, viol, cs, True)
    if best is None or max(viol, cs) < max(best.violation, best.slackness):
        best = DualState(chi, it, viol, cs, False)
    best = dataclasses.replace(best, iterations=it)
    if strict:
        raise EllipsoidNotConverged(
            f"Newton dual did not reach tol={tol:g} "
            f"(violation {best.violation:.3g}, slackness {best.slackness:.3g})",
            best,
        )
    return best


def quantize_phases(theta_relaxed, constraint: PhaseConstraint) -> PhaseConfig:
    """Lift relaxed coefficients to unit modulus and, for F3, to the nearest grid phase.

    Zero entries take angle 0; ties go to the lowest grid index.
    """
    theta = np.asarray(theta_relaxed, complex).reshape(-1)
    if constraint.kind == "F1":
        raise ValueError("quantization applies to F2 or F3 only")
    angle = np.where(np.abs(theta) > 0, np.angle(theta), 0.0)
    if constraint.kind == "F2":
        return PhaseConfig(np.exp(1j * angle), constraint)
    L = constraint.levels
    grid_angles = 2 * np.pi * np.arange(L) / L
    dist = np.abs(np.mod(angle[:, None] - grid_angles[None, :] + np.pi, 2 * np.pi) - np.pi)
    near = dist <= dist.min(axis=1, keepdims=True) + 1e-12
    idx = np.argmax(near, axis=1)
    return PhaseConfig(constraint.grid[idx], constraint)


def solve_passive(
    q: PassiveQcqp,
    constraint: PhaseConstraint = PhaseConstraint(),
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    *,
    method: str = "auto",
    chi0=None,
    return_dual: bool = False,
    strict: bool = True,
):
    """Solve the passive QCQP over the unit disks, then quantize if needed.

    ``method`` picks the dual minimizer: ``ellipsoid``, ``newton`` or
    ``auto`` (ellipsoid up to ``ELLIPSOID_MAX_DIM`` coefficients).
    """
    n = q.dim
    if n == 0:
        state = DualState(np.zeros(0), 0, 0.0, 0.0, True)
        out = PhaseConfig(np.zeros(0, complex), constraint, check=False)
        return (out, state) if return_dual else out

    theta0 = primal_theta(np.zeros(n), q)
    if np.all(np.abs(theta0) ** 2 <= 1 + tol):
        state = DualState(np.zeros(n), 1, float(np.max(np.abs(theta0) ** 2 - 1, initial=0)), 0.0, True)
        relaxed = theta0
    else:
        if method == "auto":
            method = "ellipsoid" if n <= ELLIPSOID_MAX_DIM else "newton"
        if method == "ellipsoid":
            def oracle(chi):
                return 1.0 - np.abs(primal_theta(chi, q)) ** 2

            state = ellipsoid_minimize(oracle, n, _passive_radius(q), tol, max_iter, strict=strict)
        elif method == "newton":
            state = dual_newton_minimize(q, tol, max_iter or 200, chi0=chi0, strict=strict)
        else:
            raise ValueError(f"unknown dual method {method!r}")
        relaxed = primal_theta(state.x, q)

    mag = np.abs(relaxed)
    relaxed = np.where(mag > 1.0, relaxed / np.maximum(mag, 1e-300), relaxed)
    if constraint.kind == "F1":
        out = PhaseConfig(relaxed, constraint)
    else:
        out = quantize_phases(relaxed, constraint)
    return (out, state) if return_dual else out
