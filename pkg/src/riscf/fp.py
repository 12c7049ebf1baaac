"""Closed-form auxiliary updates and the two QCQP subproblems.

Shapes used throughout: ``rho``/``mu`` are ``(K, P)``; ``xi`` and
``varpi`` are ``(K, P, U)``; precoders travel as ``(P, K, B*M)`` stream
blocks or as a flat :class:`PrecoderStack`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, stacked_channels
from .core import PrecoderStack
from .metrics import _covariance, _own, precoder_streams, received_streams, sinr_matrix

__all__ = [
    "AuxState",
    "ActiveQcqp",
    "PassiveQcqp",
    "update_rho",
    "update_mu",
    "update_xi",
    "eval_g2",
    "assemble_active",
    "passive_streams",
    "update_varpi",
    "eval_g5",
    "assemble_passive",
]


@dataclass(frozen=True)
class AuxState:
    rho: np.ndarray
    mu: np.ndarray
    xi: np.ndarray | None = None
    varpi: np.ndarray | None = None


def update_rho(cs: ChannelSet, theta, W, noise: float) -> np.ndarray:
    return sinr_matrix(cs, theta, W, noise)


def update_mu(rho, weights) -> np.ndarray:
    return np.asarray(weights, float)[:, None] * (1.0 + np.asarray(rho, float))


def _quadratic_transform_aux(streams: np.ndarray, mu, noise: float) -> np.ndarray:
    cov = _covariance(streams, noise)
    rhs = _own(streams)
    return np.sqrt(np.asarray(mu, float))[..., None] * np.linalg.solve(cov, rhs[..., None])[..., 0]


def _quadratic_transform_value(streams: np.ndarray, aux: np.ndarray, mu, noise: float) -> float:
    own = _own(streams)
    lin = 2.0 * np.sqrt(mu) * np.real(np.einsum("kpu,kpu->kp", aux.conj(), own))
    proj = np.einsum("kpu,kpju->kpj", aux.conj(), streams)
    quad = np.sum(np.abs(proj) ** 2, axis=-1) + noise * np.sum(np.abs(aux) ** 2, axis=-1)
    return float(np.sum(lin - quad))


def update_xi(cs: ChannelSet, theta, W, mu, noise: float) -> np.ndarray:
    """Optimal active-side auxiliary vector for every (user, subcarrier)."""
    mu = np.asarray(mu, float)
    if np.any(mu < 0):
        raise ValueError("mu must be nonnegative")
    return _quadratic_transform_aux(received_streams(cs, theta, W), mu, noise)


def eval_g2(W, xi, cs: ChannelSet, theta, mu, noise: float) -> float:
    """Quadratic-transform surrogate of the active subproblem, evaluated literally."""
    return _quadratic_transform_value(received_streams(cs, theta, W), np.asarray(xi), np.asarray(mu, float), noise)


@dataclass(frozen=True, eq=False)
class ActiveQcqp:
    """``max -W^H A W + 2 Re{V^H W} - Y`` s.t. ``W^H D_b W <= p_max[b]``.

    ``A`` is kept as its ``P`` distinct ``(B*M, B*M)`` blocks ``a[p]``;
    the full matrix is ``blockdiag_p(I_K ⊗ a[p])``. ``V`` is stored as
    ``(P, K, B*M)`` stream blocks in precoder order.

    When the problem comes from :func:`assemble_active` it also carries the
    factors ``a[p] = T[p] T[p]^H`` and ``V[p]^T = T[p] coef[p]`` so that the
    solver can avoid inverting the rank-deficient ``a[p]`` directly.
    """

    a: np.ndarray
    V: np.ndarray
    Y: float
    p_max: np.ndarray
    B: int
    M: int
    T: np.ndarray | None = None
    coef: np.ndarray | None = None

    @property
    def P(self) -> int:
        return self.a.shape[0]

    @property
    def K(self) -> int:
        return self.V.shape[1]

    @property
    def dim(self) -> int:
        return self.V.size

    @property
    def V_flat(self) -> np.ndarray:
        return self.V.reshape(-1)

    def _blocks(self, W) -> np.ndarray:
        if isinstance(W, PrecoderStack):
            return W.per_stream()
        return np.asarray(W, complex).reshape(self.V.shape)

    def quad(self, W) -> float:
        w = self._blocks(W)
        return float(np.real(np.einsum("pkx,pxy,pky->", w.conj(), self.a, w, optimize=True)))

    def objective(self, W) -> float:
        w = self._blocks(W)
        return -self.quad(w) + 2.0 * float(np.real(np.vdot(self.V, w))) - self.Y

    def bs_power(self, W) -> np.ndarray:
        w = self._blocks(W).reshape(self.P, self.K, self.B, self.M)
        return np.sum(np.abs(w) ** 2, axis=(0, 1, 3))

    def A_dense(self) -> np.ndarray:
        """Materialize the full ``A`` (tests and small instances only)."""
        from scipy.linalg import block_diag

        eye = np.eye(self.K)
        return block_diag(*[np.kron(eye, ap) for ap in self.a])

    def D(self, b: int) -> np.ndarray:
        """Dense selection matrix ``I_{PK} ⊗ ((e_b e_b^H) ⊗ I_M)``."""
        e = np.zeros((self.B, self.B))
        e[b, b] = 1.0
        return np.kron(np.eye(self.P * self.K), np.kron(e, np.eye(self.M)))

    def D_diag(self, b: int) -> np.ndarray:
        mask = np.zeros((self.B, self.M))
        mask[b] = 1.0
        return np.tile(mask.reshape(-1), self.P * self.K)


def assemble_active(cs: ChannelSet, theta, xi, mu, noise: float, p_max) -> ActiveQcqp:
    """Build the active QCQP whose objective equals the surrogate for every ``W``."""
    d = cs.dims
    h = stacked_channels(cs, theta)  # (K, P, BM, U)
    t = np.einsum("kpxu,kpu->kpx", h, np.asarray(xi), optimize=True)  # h_{k,p} xi_{k,p}
    a = np.einsum("kpx,kpy->pxy", t, t.conj(), optimize=True)
    a = 0.5 * (a + np.swapaxes(a, -1, -2).conj())
    V = (np.sqrt(np.asarray(mu, float))[..., None] * t).transpose(1, 0, 2).copy()
    Y = float(noise * np.sum(np.abs(xi) ** 2))
    p_max = np.broadcast_to(np.asarray(p_max, float), (d.B,)).copy()
    T = t.transpose(1, 2, 0).copy()  # (P, BM, K)
    coef = np.sqrt(np.asarray(mu, float)).T[:, :, None] * np.eye(d.K)[None]  # diag(sqrt(mu_p))
    return ActiveQcqp(a=a, V=V, Y=Y, p_max=p_max, B=d.B, M=d.M, T=T, coef=coef)


def passive_streams(cs: ChannelSet, theta, W) -> np.ndarray:
    """``Q[k, p, j] = sum_b (H^H_{b,k,p} + F^H_{k,p} Θ^H G_{b,p}) w_{b,p,j}``, ``(K, P, K, U)``.

    Built BS by BS from the raw link matrices rather than from the stacked
    effective channel.
    """
    d = cs.dims
    theta = np.asarray(getattr(theta, "theta", theta), complex).reshape(-1)
    w = precoder_streams(W, d).reshape(d.P, d.K, d.B, d.M)
    out = np.einsum("bkpmu,pjbm->kpju", cs.H.conj(), w, optimize=True)
    if d.R:
        gw = np.einsum("bpnm,pjbm->pjn", cs.G_stacked, w, optimize=True)
        out = out + np.einsum("kpnu,n,pjn->kpju", cs.F_stacked.conj(), theta.conj(), gw, optimize=True)
    return out


def update_varpi(cs: ChannelSet, theta, W, mu, noise: float) -> np.ndarray:
    """Optimal passive-side auxiliary vector for every (user, subcarrier)."""
    return _quadratic_transform_aux(passive_streams(cs, theta, W), np.asarray(mu, float), noise)


def eval_g5(theta, varpi, cs: ChannelSet, W, mu, noise: float) -> float:
    return _quadratic_transform_value(
        passive_streams(cs, theta, W), np.asarray(varpi), np.asarray(mu, float), noise
    )


@dataclass(frozen=True, eq=False)
class PassiveQcqp:
    """``max -θ^H Λ θ + 2 Re{θ^H ν} - ζ`` with ``|θ_j| <= 1``.

    ``factor`` and ``z``, when present, satisfy ``Λ = factor factor^H`` and
    ``ν = factor z``.
    """

    Lam: np.ndarray
    nu: np.ndarray
    zeta: float
    c: np.ndarray | None = None
    g: np.ndarray | None = None
    factor: np.ndarray | None = None
    z: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.nu.size

    def objective(self, theta) -> float:
        theta = np.asarray(getattr(theta, "theta", theta), complex).reshape(-1)
        quad = float(np.real(np.vdot(theta, self.Lam @ theta)))
        return -quad + 2.0 * float(np.real(np.vdot(theta, self.nu))) - self.zeta


def assemble_passive(cs: ChannelSet, W, varpi, mu, noise: float) -> PassiveQcqp:
    """Build the passive QCQP whose objective equals the surrogate for every θ."""
    d = cs.dims
    varpi = np.asarray(varpi)
    sq_mu = np.sqrt(np.asarray(mu, float))
    w = precoder_streams(W, d).reshape(d.P, d.K, d.B, d.M)
    direct = np.einsum("bkpmu,pjbm->kpju", cs.H.conj(), w, optimize=True)
    c = np.einsum("kpu,kpju->kpj", varpi.conj(), direct)
    if d.R == 0:
        n = 0
        g = np.zeros((d.K, d.P, d.K, 0), complex)
    else:
        n = d.R * d.N
        weights = np.einsum("kpnu,kpu->kpn", cs.F_stacked, varpi).conj()  # diag(varpi^H F^H)
        gw = np.einsum("bpnm,pjbm->pjn", cs.G_stacked, w, optimize=True)
        g = weights[:, :, None, :] * gw[None, :, :, :]
    rows = g.reshape(-1, n)
    Lam = rows.T @ rows.conj()
    Lam = 0.5 * (Lam + Lam.conj().T)
    idx = np.arange(d.K)
    own_c = c[idx, :, idx]  # (K, P)
    # nu = sum sqrt(mu) g_{k,p,k} - sum c^* g_{k,p,j}, written as rows^T z
    z = -c.conj()
    z[idx, :, idx] += sq_mu
    z = z.reshape(-1)
    nu = rows.T @ z
    zeta = float(
        np.sum(np.abs(c) ** 2)
        + noise * np.sum(np.abs(varpi) ** 2)
        - 2.0 * np.sum(sq_mu * np.real(own_c))
    )
    return PassiveQcqp(Lam=Lam, nu=nu, zeta=zeta, c=c, g=g, factor=rows.T.copy(), z=z)
