"""Frequency-domain channel synthesis for the BS-user, BS-RIS and RIS-user links.

Array layouts (all complex128)::

    H[b, k, p] : M x U   (H^H is the U x M BS-user channel)
    G[b, r, p] : N x M
    F[r, k, p] : N x U   (F^H is the U x N RIS-user channel)

Small-scale fading is Rician with a deterministic rank-one line-of-sight
part built from half-wavelength uniform linear arrays lying along the
x-axis. Each link ``(kind, i, j)`` draws from its own PCG64 substream keyed
on the master seed, so resizing one dimension leaves the draws of the
other links untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PathLossParams, ScenarioConfig, validate
from .core import NetworkDims, PhaseConfig, db_to_linear

__all__ = [
    "ChannelSet",
    "path_loss_direct",
    "path_loss_reflected",
    "steering_vector",
    "los_matrix",
    "rician_channel",
    "generate_channel_set",
    "effective_channel",
    "stacked_channels",
]

_LINK_BS_USER, _LINK_BS_RIS, _LINK_RIS_USER = 0, 1, 2


def _check_distance(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distances must be strictly positive")
    return d


def path_loss_direct(d_bu, params: PathLossParams = PathLossParams()):
    """Linear BS-user power gain ``C_d G_B G_u d^-κ_Bu``."""
    d = _check_distance(d_bu)
    return db_to_linear(params.direct_gain_db) * d ** (-params.kappa_bu)


def path_loss_reflected(d_br, d_ru, params: PathLossParams = PathLossParams()):
    """Linear gain of the BS-RIS-user cascade (product of both legs)."""
    d1 = _check_distance(d_br)
    d2 = _check_distance(d_ru)
    return (
        db_to_linear(params.reflected_gain_db)
        * d1 ** (-params.kappa_br)
        * d2 ** (-params.kappa_ru)
    )


def steering_vector(n: int, angle: float) -> np.ndarray:
    """Unit-modulus response of an n-element half-wavelength ULA along x."""
    return np.exp(1j * np.pi * np.arange(n) * np.cos(angle))


def los_matrix(rows: int, cols: int, angle_rx: float = math.pi / 2, angle_tx: float = math.pi / 2):
    """Rank-one unit-modulus LoS matrix ``a_rx a_tx^H``."""
    return np.outer(steering_vector(rows, angle_rx), steering_vector(cols, angle_tx).conj())


def _bearing(src, dst) -> float:
    delta = np.asarray(dst, float) - np.asarray(src, float)
    return float(math.atan2(delta[1], delta[0]))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    # unit variance per complex entry
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def rician_channel(rows, cols, beta, rng, *, los=None, size=()):
    """Draw ``sqrt(β/(1+β)) H_LoS + sqrt(1/(1+β)) H_NLoS``.

    ``size`` prepends independent realizations (the LoS part is shared).
    ``beta = inf`` returns the LoS matrix without consuming random numbers.
    """
    beta = float(beta)
    if beta < 0 or math.isnan(beta):
        raise ValueError(f"Rician factor must be ≥ 0, got {beta}")
    size = tuple(np.atleast_1d(size)) if size != () else ()
    if los is None:
        los = los_matrix(rows, cols)
    los = np.asarray(los, dtype=complex)
    if los.shape != (rows, cols):
        raise ValueError("LoS matrix shape mismatch")
    if math.isinf(beta):
        return np.broadcast_to(los, size + (rows, cols)).copy()
    nlos = _cn(rng, size + (rows, cols))
    if beta == 0.0:
        return nlos
    return math.sqrt(beta / (1 + beta)) * los + math.sqrt(1 / (1 + beta)) * nlos


@dataclass(frozen=True, eq=False)
class ChannelSet:
    dims: NetworkDims
    H: np.ndarray
    G: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        d = self.dims
        expected = {
            "H": (d.B, d.K, d.P, d.M, d.U),
            "G": (d.B, d.R, d.P, d.N, d.M),
            "F": (d.R, d.K, d.P, d.N, d.U),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=complex)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def G_stacked(self) -> np.ndarray:
        """``(B, P, R*N, M)``: RIS blocks of ``G_{b,p}`` stacked vertically."""
        d = self.dims
        return self.G.transpose(0, 2, 1, 3, 4).reshape(d.B, d.P, d.R * d.N, d.M)

    @property
    def F_stacked(self) -> np.ndarray:
        """``(K, P, R*N, U)``: RIS blocks of ``F_{k,p}`` stacked vertically."""
        d = self.dims
        return self.F.transpose(1, 2, 0, 3, 4).reshape(d.K, d.P, d.R * d.N, d.U)

    def without_ris(self) -> "ChannelSet":
        d = self.dims.replace(R=0)
        return ChannelSet(
            d,
            self.H,
            np.zeros((d.B, 0, d.P, d.N, d.M), complex),
            np.zeros((0, d.K, d.P, d.N, d.U), complex),
        )

    # structured-text dump ---------------------------------------------
    def to_dict(self) -> dict:
        def pairs(a):
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "dims": {k: getattr(self.dims, k) for k in ("B", "R", "K", "M", "U", "N", "P")},
            "H": pairs(self.H),
            "G": pairs(self.G),
            "F": pairs(self.F),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelSet":
        dims = NetworkDims(**data["dims"])
        d = dims
        shapes = {
            "H": (d.B, d.K, d.P, d.M, d.U),
            "G": (d.B, d.R, d.P, d.N, d.M),
            "F": (d.R, d.K, d.P, d.N, d.U),
        }
        arrays = {}
        for name, shape in shapes.items():
            raw = np.asarray(data[name], dtype=float).reshape(shape + (2,))
            arrays[name] = raw[..., 0] + 1j * raw[..., 1]
        return cls(dims, **arrays)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ChannelSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _substream(seed: int, link: int, i: int, j: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(link, i, j)))
    )


def generate_channel_set(config: ScenarioConfig, seed: int | None = None) -> ChannelSet:
    """Draw every channel of the scenario, path loss included.

    The reflected-link gain is split between the two legs so that the
    product of their power scalings equals the cascade gain: the BS-RIS
    matrix carries ``C_r d_BR^-κ_BR`` and the RIS-user matrix carries
    ``d_Ru^-κ_Ru``.
    """
    problems = validate(config)
    if problems:
        raise ValueError("invalid scenario: " + "; ".join(problems))
    seed = config.seed if seed is None else seed
    d = config.dims
    pl = config.pathloss
    ric = config.rician
    bs, ris, users = config.bs_positions, config.ris_positions, config.user_positions

    H = np.empty((d.B, d.K, d.P, d.M, d.U), complex)
    for b in range(d.B):
        for k in range(d.K):
            los = los_matrix(d.M, d.U, _bearing(bs[b], users[k]), _bearing(users[k], bs[b]))
            rng = _substream(seed, _LINK_BS_USER, b, k)
            gain = path_loss_direct(np.linalg.norm(bs[b] - users[k]), pl)
            H[b, k] = math.sqrt(gain) * rician_channel(d.M, d.U, ric.bs_user, rng, los=los, size=d.P)

    G = np.empty((d.B, d.R, d.P, d.N, d.M), complex)
    cr = db_to_linear(pl.reflected_gain_db)
    for b in range(d.B):
        for r in range(d.R):
            los = los_matrix(d.N, d.M, _bearing(ris[r], bs[b]), _bearing(bs[b], ris[r]))
            rng = _substream(seed, _LINK_BS_RIS, b, r)
            gain = cr * _check_distance(np.linalg.norm(bs[b] - ris[r])) ** (-pl.kappa_br)
            G[b, r] = math.sqrt(gain) * rician_channel(d.N, d.M, ric.bs_ris, rng, los=los, size=d.P)

    F = np.empty((d.R, d.K, d.P, d.N, d.U), complex)
    for r in range(d.R):
        for k in range(d.K):
            los = los_matrix(d.N, d.U, _bearing(ris[r], users[k]), _bearing(users[k], ris[r]))
            rng = _substream(seed, _LINK_RIS_USER, r, k)
            gain = _check_distance(np.linalg.norm(ris[r] - users[k])) ** (-pl.kappa_ru)
            F[r, k] = math.sqrt(gain) * rician_channel(d.N, d.U, ric.ris_user, rng, los=los, size=d.P)

    return ChannelSet(d, H, G, F)


def _theta_vector(theta, dims: NetworkDims) -> np.ndarray:
    if isinstance(theta, PhaseConfig):
        theta = theta.theta
    theta = np.asarray(theta, dtype=complex).reshape(-1)
    if theta.size != dims.R * dims.N:
        raise ValueError(f"theta has {theta.size} entries, expected R*N = {dims.R * dims.N}")
    return theta


def stacked_channels(cs: ChannelSet, theta) -> np.ndarray:
    """Effective channels ``h_{k,p}`` as an array shaped ``(K, P, B*M, U)``.

    Block ``b`` of ``h_{k,p}`` is ``H_{b,k,p} + G_{b,p}^H Θ F_{k,p}``, the
    conjugate transpose of the U x M equivalent channel.
    """
    d = cs.dims
    theta = _theta_vector(theta, d)
    h = cs.H.transpose(1, 2, 0, 3, 4).astype(complex)  # (K, P, B, M, U)
    if d.R:
        h = h + np.einsum(
            "bpnm,n,kpnu->kpbmu", cs.G_stacked.conj(), theta, cs.F_stacked, optimize=True
        )
    return h.reshape(d.K, d.P, d.B * d.M, d.U)


def effective_channel(cs: ChannelSet, theta, b: int, k: int, p: int) -> np.ndarray:
    """U x M equivalent channel from BS ``b`` to user ``k`` on subcarrier ``p``."""
    d = cs.dims
    if not (0 <= b < d.B and 0 <= k < d.K and 0 <= p < d.P):
        raise IndexError(f"(b={b}, k={k}, p={p}) out of range")
    theta = _theta_vector(theta, d)
    out = cs.H[b, k, p].conj().T.copy()
    for r in range(d.R):
        th = np.diag(theta[r * d.N:(r + 1) * d.N])
        out += cs.F[r, k, p].conj().T @ th.conj().T @ cs.G[b, r, p]
    return out
