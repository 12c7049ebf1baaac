"""SINR, weighted sum-rate and the ratio terms of the reformulated objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, stacked_channels
from .core import NetworkDims, PrecoderStack

__all__ = [
    "RateReport",
    "precoder_streams",
    "received_streams",
    "sinr",
    "sinr_matrix",
    "wsr",
    "ratio_term",
    "ratio_matrix",
    "lagrangian_objective",
    "SignalSimulation",
    "simulate_received_signal",
]


def precoder_streams(W, dims: NetworkDims) -> np.ndarray:
    """Return the precoder as ``(P, K, B*M)``; row ``[p, k]`` is ``w_{p,k}``."""
    if isinstance(W, PrecoderStack):
        return W.per_stream()
    W = np.asarray(W, dtype=complex)
    if W.size != dims.precoder_size:
        raise ValueError(f"precoder has {W.size} entries, expected {dims.precoder_size}")
    return W.reshape(dims.P, dims.K, dims.B * dims.M)


def received_streams(cs: ChannelSet, theta, W, h=None) -> np.ndarray:
    """``out[k, p, j] = h_{k,p}^H w_{p,j}``, the U-vector that stream ``j`` leaves at user ``k``."""
    if h is None:
        h = stacked_channels(cs, theta)
    w = precoder_streams(W, cs.dims)
    return np.einsum("kpxu,pjx->kpju", h.conj(), w, optimize=True)


def _covariance(streams: np.ndarray, noise: float) -> np.ndarray:
    U = streams.shape[-1]
    cov = np.einsum("kpju,kpjv->kpuv", streams, streams.conj(), optimize=True)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2).conj())
    return cov + noise * np.eye(U)


def _own(streams: np.ndarray) -> np.ndarray:
    K = streams.shape[0]
    idx = np.arange(K)
    return streams[idx, :, idx, :]  # (K, P, U)


def _quad_inv(cov: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """``v^H C^{-1} v`` through a batched Cholesky factor of ``C``."""
    chol = np.linalg.cholesky(cov)
    y = np.linalg.solve(chol, vec[..., None])[..., 0]
    return np.sum(np.abs(y) ** 2, axis=-1)


def sinr_matrix(cs: ChannelSet, theta, W, noise: float, *, streams=None) -> np.ndarray:
    """SINR of every (user, subcarrier) pair as a ``(K, P)`` array."""
    if streams is None:
        streams = received_streams(cs, theta, W)
    K = streams.shape[0]
    others = streams * (1.0 - np.eye(K))[:, None, :, None]
    return _quad_inv(_covariance(others, noise), _own(streams))


def sinr(cs: ChannelSet, theta, W, k: int, p: int, noise: float) -> float:
    return float(sinr_matrix(cs, theta, W, noise)[k, p])


def ratio_matrix(cs: ChannelSet, theta, W, noise: float, *, streams=None) -> np.ndarray:
    """Ratio terms with the full-sum covariance, ``(K, P)``, each in ``[0, 1)``."""
    if streams is None:
        streams = received_streams(cs, theta, W)
    return _quad_inv(_covariance(streams, noise), _own(streams))


def ratio_term(cs: ChannelSet, theta, W, k: int, p: int, noise: float) -> float:
    return float(ratio_matrix(cs, theta, W, noise)[k, p])


@dataclass(frozen=True)
class RateReport:
    gamma: np.ndarray
    rate: np.ndarray
    weights: np.ndarray
    wsr: float

    @classmethod
    def from_sinr(cls, gamma, weights) -> "RateReport":
        gamma = np.asarray(gamma, dtype=float)
        weights = np.asarray(weights, dtype=float)
        rate = np.log2(1.0 + gamma)
        return cls(gamma, rate, weights, float(np.sum(weights[:, None] * rate)))

    @property
    def user_rates(self) -> np.ndarray:
        """Weighted rate of each user summed over subcarriers."""
        return self.weights * self.rate.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "wsr": self.wsr,
            "gamma": self.gamma.tolist(),
            "rate": self.rate.tolist(),
            "user_rates": self.user_rates.tolist(),
        }


def wsr(cs: ChannelSet, theta, W, weights, noise: float) -> RateReport:
    return RateReport.from_sinr(sinr_matrix(cs, theta, W, noise), weights)


def lagrangian_objective(cs: ChannelSet, theta, W, rho, weights, noise: float) -> float:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    eta = np.asarray(weights, dtype=float)[:, None]
    f = ratio_matrix(cs, theta, W, noise)
    return float(np.sum(eta * np.log2(1 + rho)) - np.sum(eta * rho) + np.sum(eta * (1 + rho) * f))


@dataclass(frozen=True)
class SignalSimulation:
    sinr: float
    symbols: np.ndarray
    estimates: np.ndarray


def _qpsk(rng, shape) -> np.ndarray:
    bits = rng.integers(0, 2, size=shape + (2,))
    return ((2 * bits[..., 0] - 1) + 1j * (2 * bits[..., 1] - 1)) / np.sqrt(2)


def simulate_received_signal(
    cs: ChannelSet,
    theta,
    W,
    k: int,
    p: int,
    noise: float,
    n_trials: int = 100_000,
    rng=None,
    *,
    noise_free: bool = False,
) -> SignalSimulation:
    """Monte-Carlo the received signal of user ``k`` on subcarrier ``p``.

    Every user gets unit-power QPSK symbols, AWGN has covariance
    ``noise * I``, and the user combines with the MMSE direction
    ``(interference + noise covariance)^{-1} h^H w_k``. The empirical SINR
    is the sample power of the desired part over the sample power of
    everything else after combining.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be ≥ 1")
    rng = np.random.default_rng(rng)
    d = cs.dims
    streams = received_streams(cs, theta, W)[k, p]  # (K, U)
    desired = streams[k]
    s = _qpsk(rng, (n_trials, d.K))
    y = s @ streams
    if not noise_free:
        y = y + np.sqrt(noise / 2) * (
            rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        )
    others = np.delete(streams, k, axis=0)
    cov = others.T @ others.conj() + noise * np.eye(d.U)
    u = np.linalg.solve(cov, desired)
    gain = np.vdot(u, desired)
    combined = y @ u.conj()
    wanted = gain * s[:, k]
    residual = combined - wanted
    p_sig = np.mean(np.abs(wanted) ** 2)
    p_res = np.mean(np.abs(residual) ** 2)
    if p_sig == 0:
        emp = 0.0
    elif p_res == 0:
        emp = np.inf
    else:
        emp = float(p_sig / p_res)
    estimates = combined / gain if gain != 0 else np.zeros(n_trials, complex)
    return SignalSimulation(emp, s[:, k], estimates)
