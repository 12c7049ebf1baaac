"""Scikit-learn style front end for the joint precoder.

``JointPrecoder`` treats one channel realization as its training input:
``fit`` runs the alternating optimizer, ``predict`` returns per-stream
SINRs for a channel set under the fitted precoders, and ``score`` the
weighted sum-rate.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .channels import ChannelSet
from .config import SolverSettings
from .core import NetworkDims, PhaseConfig, PhaseConstraint, PrecoderStack
from .metrics import sinr_matrix, wsr
from .optimizer import optimize

__all__ = [
    "JointPrecoder",
    "check_channel_set",
    "check_constraint",
    "check_positive",
    "check_power_budget",
    "check_weights",
]


def check_channel_set(cs, dims: NetworkDims | None = None) -> ChannelSet:
    """Make sure ``cs`` is a :class:`ChannelSet` with finite entries.

    Parameters
    ----------
    cs : ChannelSet
    dims : NetworkDims, optional
        If given, ``cs.dims`` must match it.
    """
    if not isinstance(cs, ChannelSet):
        raise TypeError(f"expected a ChannelSet, got {type(cs).__name__}")
    for name in ("H", "G", "F"):
        if not np.all(np.isfinite(getattr(cs, name))):
            raise ValueError(f"channel {name} has non-finite entries")
    if dims is not None and cs.dims != dims:
        raise ValueError(f"channel dims {cs.dims} do not match fitted dims {dims}")
    return cs


def check_positive(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or not value > 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_power_budget(p_max, B: int) -> np.ndarray:
    """Broadcast ``p_max`` to one positive budget per BS."""
    arr = np.asarray(p_max, dtype=float)
    try:
        arr = np.broadcast_to(arr, (B,)).copy()
    except ValueError:
        raise ValueError(f"p_max must be a scalar or have length {B}, got shape {arr.shape}") from None
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("p_max entries must be positive and finite")
    return arr


def check_weights(weights, K: int) -> np.ndarray:
    if weights is None:
        return np.ones(K)
    arr = np.asarray(weights, dtype=float).reshape(-1)
    if arr.shape != (K,):
        raise ValueError(f"weights must have length {K}, got {arr.size}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("weights must be positive and finite")
    return arr


def check_constraint(constraint) -> PhaseConstraint:
    """Accept a :class:`PhaseConstraint` or its text form (``f1``, ``f2``, ``f3:L``)."""
    if isinstance(constraint, PhaseConstraint):
        return constraint
    if isinstance(constraint, str):
        return PhaseConstraint.parse(constraint)
    raise TypeError(f"constraint must be a PhaseConstraint or str, got {type(constraint).__name__}")


class JointPrecoder(BaseEstimator):
    """Joint BS precoding and RIS phase design for one channel realization.

    Parameters
    ----------
    p_max : float or array_like, default=1.0
        Per-BS power budget in watts.
    noise_power : float, default=1e-15
        Noise power in watts.
    weights : array_like, optional
        User weights; ones when omitted.
    constraint : str or PhaseConstraint, default="f1"
    rel_tol, max_outer, dual_tol : solver settings
        See :class:`~riscf.config.SolverSettings`.
    extrapolate : bool, default=True
    strict_dual : bool, default=False
    warmup_noise_db : float, default=60.0
        Noise boost of the warm-up stage; 0 disables it.
    warmup_max_outer : int, default=10
    random_state : int, Generator or None
        Seeds the random starting point.

    Attributes
    ----------
    W_ : PrecoderStack
    theta_ : PhaseConfig
    report_ : RateReport
    trace_ : OptimizerTrace
    n_iter_ : int
    converged_ : bool
    dims_ : NetworkDims
    """

    def __init__(
        self,
        p_max=1.0,
        noise_power=1e-15,
        weights=None,
        constraint="f1",
        rel_tol=1e-3,
        max_outer=100,
        dual_tol=1e-7,
        extrapolate=True,
        strict_dual=False,
        warmup_noise_db=60.0,
        warmup_max_outer=10,
        random_state=None,
    ):
        self.p_max = p_max
        self.noise_power = noise_power
        self.weights = weights
        self.constraint = constraint
        self.rel_tol = rel_tol
        self.max_outer = max_outer
        self.dual_tol = dual_tol
        self.extrapolate = extrapolate
        self.strict_dual = strict_dual
        self.warmup_noise_db = warmup_noise_db
        self.warmup_max_outer = warmup_max_outer
        self.random_state = random_state

    def _settings(self) -> SolverSettings:
        check_positive(self.rel_tol, "rel_tol")
        check_positive(self.dual_tol, "dual_tol")
        if not isinstance(self.max_outer, numbers.Integral) or self.max_outer < 1:
            raise ValueError(f"max_outer must be a positive integer, got {self.max_outer!r}")
        if not isinstance(self.warmup_max_outer, numbers.Integral) or self.warmup_max_outer < 1:
            raise ValueError(f"warmup_max_outer must be a positive integer, got {self.warmup_max_outer!r}")
        if not np.isfinite(self.warmup_noise_db) or self.warmup_noise_db < 0:
            raise ValueError(f"warmup_noise_db must be ≥ 0, got {self.warmup_noise_db!r}")
        return SolverSettings(
            rel_tol=float(self.rel_tol),
            max_outer=int(self.max_outer),
            dual_tol=float(self.dual_tol),
            extrapolate=bool(self.extrapolate),
            strict_dual=bool(self.strict_dual),
            warmup_noise_db=float(self.warmup_noise_db),
            warmup_max_outer=int(self.warmup_max_outer),
        )

    def fit(self, X, y=None, *, W0: PrecoderStack | None = None, theta0: PhaseConfig | None = None):
        """Optimize W and Θ for the channel set ``X``; ``y`` is ignored."""
        cs = check_channel_set(X)
        d = cs.dims
        noise = check_positive(self.noise_power, "noise_power")
        p_max = check_power_budget(self.p_max, d.B)
        eta = check_weights(self.weights, d.K)
        con = check_constraint(self.constraint)
        result = optimize(
            cs, p_max, noise, eta, con, self._settings(),
            W0=W0, theta0=theta0, rng=self.random_state,
        )
        self.W_ = result.W
        self.theta_ = result.theta
        self.report_ = result.report
        self.trace_ = result.trace
        self.n_iter_ = result.trace.iterations
        self.converged_ = result.trace.converged
        self.dims_ = d
        return self

    def predict(self, X) -> np.ndarray:
        """Per-(user, subcarrier) SINR of ``X`` under the fitted design, shape ``(K, P)``."""
        check_is_fitted(self, "W_")
        cs = check_channel_set(X, self.dims_)
        return sinr_matrix(cs, self.theta_, self.W_, float(self.noise_power))

    def score(self, X, y=None) -> float:
        """Weighted sum-rate of ``X`` under the fitted design (bit/s/Hz)."""
        check_is_fitted(self, "W_")
        cs = check_channel_set(X, self.dims_)
        eta = check_weights(self.weights, cs.dims.K)
        return wsr(cs, self.theta_, self.W_, eta, float(self.noise_power)).wsr
