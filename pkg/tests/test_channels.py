import math

import numpy as np
import pytest

from riscf.channels import (
    ChannelSet,
    effective_channel,
    generate_channel_set,
    los_matrix,
    path_loss_direct,
    path_loss_reflected,
    rician_channel,
    stacked_channels,
)
from riscf.config import PathLossParams, RicianFactors, ScenarioConfig
from riscf.core import NetworkDims, PhaseConfig
from riscf.experiments import scenario_fig4, scenario_fig7

from conftest import random_channels, random_dims, random_theta


def test_direct_path_loss_values():
    assert path_loss_direct(1.0) == pytest.approx(1e-3, rel=1e-12)
    # oracle: 10**(-30/10) * d**-3
    assert path_loss_direct(10.0) == pytest.approx(1e-6, rel=1e-12)
    assert path_loss_direct(100.0) == pytest.approx(1e-9, rel=1e-12)
    with pytest.raises(ValueError):
        path_loss_direct(0.0)


def test_reflected_path_loss_values():
    assert path_loss_reflected(1.0, 1.0) == pytest.approx(1e-4, rel=1e-12)
    # oracle: 10**(-40/10) * 30**-2 * 5**-2
    assert path_loss_reflected(30.0, 5.0) == pytest.approx(4.444444444444445e-09, rel=1e-12)
    assert path_loss_reflected(7.0, 13.0) == pytest.approx(path_loss_reflected(13.0, 7.0), rel=1e-14)
    skew = PathLossParams(kappa_br=2.0, kappa_ru=3.0)
    assert path_loss_reflected(2.0, 1.0, skew) != pytest.approx(path_loss_reflected(1.0, 2.0, skew))


def test_rician_limits_and_moments():
    rng = np.random.default_rng(0)
    nlos = rician_channel(4, 3, 0.0, rng, size=10_000)
    assert np.mean(np.abs(nlos) ** 2) == pytest.approx(1.0, rel=0.05)
    los_only = rician_channel(4, 3, math.inf, rng, size=3)
    np.testing.assert_allclose(np.abs(los_only), 1.0, rtol=1e-12)
    mixed = rician_channel(4, 3, 1.0, rng, size=10_000)
    assert np.mean(np.abs(mixed) ** 2) == pytest.approx(1.0, rel=0.05)
    with pytest.raises(ValueError):
        rician_channel(2, 2, -1.0, rng)


def test_rician_zero_factor_is_plain_scatter():
    a = rician_channel(3, 2, 0.0, np.random.default_rng(7), size=5)
    rng = np.random.default_rng(7)
    b = (rng.standard_normal((5, 3, 2)) + 1j * rng.standard_normal((5, 3, 2))) / math.sqrt(2)
    np.testing.assert_array_equal(a, b)


def test_los_matrix_rank_one():
    L = los_matrix(6, 4, 0.3, 1.1)
    s = np.linalg.svd(L, compute_uv=False)
    assert s[1] < 1e-10 * s[0]


def test_generation_is_deterministic():
    cfg = scenario_fig4(seed=3)
    a, b = generate_channel_set(cfg), generate_channel_set(cfg)
    for name in ("H", "G", "F"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = generate_channel_set(cfg, seed=4)
    assert not np.array_equal(a.H, c.H)


def _single_link(dist, P=1000):
    d = NetworkDims(B=1, R=0, K=1, M=4, U=2, N=1, P=P)
    return ScenarioConfig(
        dims=d,
        bs_positions=[[0.0, 0.0]],
        ris_positions=np.zeros((0, 2)),
        user_positions=[[dist, 0.0]],
        p_max=1.0,
        noise_power=1e-15,
        rician=RicianFactors(bs_user=0.0),
    )


def test_doubling_distance_cuts_power_eightfold():
    near = generate_channel_set(_single_link(10.0)).H
    far = generate_channel_set(_single_link(20.0, P=1000).replace(seed=1)).H
    ratio = np.mean(np.abs(near) ** 2) / np.mean(np.abs(far) ** 2)
    assert ratio == pytest.approx(8.0, rel=0.10)


def test_cascade_gain_split_matches_reflected_loss():
    cfg = scenario_fig4()
    d = cfg.dims
    cfg = cfg.replace(rician=RicianFactors(math.inf, math.inf, math.inf))
    cs = generate_channel_set(cfg)
    d_br = np.linalg.norm(cfg.bs_positions[0] - cfg.ris_positions[0])
    d_ru = np.linalg.norm(cfg.ris_positions[0] - cfg.user_positions[0])
    # with pure LoS every entry has the deterministic amplitude
    gain = np.abs(cs.G[0, 0, 0, 0, 0]) ** 2 * np.abs(cs.F[0, 0, 0, 0, 0]) ** 2
    assert gain == pytest.approx(path_loss_reflected(d_br, d_ru), rel=1e-10)
    assert cs.G.shape == (d.B, d.R, d.P, d.N, d.M)


def test_without_ris_and_zero_phase_give_direct_channel():
    rng = np.random.default_rng(2)
    d = random_dims(rng, min_r=1)
    cs = random_channels(rng, d)
    zero = PhaseConfig(np.zeros(d.R * d.N))
    direct = cs.H.transpose(1, 2, 0, 3, 4).reshape(d.K, d.P, d.B * d.M, d.U)
    np.testing.assert_array_equal(stacked_channels(cs, zero), direct)
    bare = cs.without_ris()
    assert bare.dims.R == 0 and bare.G.size == 0 and bare.F.size == 0
    np.testing.assert_array_equal(stacked_channels(bare, np.zeros(0)), direct)
    np.testing.assert_array_equal(effective_channel(cs, zero, 0, 0, 0), cs.H[0, 0, 0].conj().T)


def test_single_element_reflection():
    d = NetworkDims(B=1, R=1, K=1, M=1, U=1, N=1, P=1)
    cs = ChannelSet(d, np.zeros((1, 1, 1, 1, 1)), np.ones((1, 1, 1, 1, 1)), np.ones((1, 1, 1, 1, 1)))
    phi = 0.7
    out = effective_channel(cs, PhaseConfig([np.exp(1j * phi)]), 0, 0, 0)
    np.testing.assert_allclose(out, [[np.exp(-1j * phi)]], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_effective_channel_matches_dense_product(seed):
    rng = np.random.default_rng(seed)
    d = random_dims(rng, min_r=1)
    cs = random_channels(rng, d)
    theta = random_theta(rng, d)
    Theta = np.diag(theta.theta)
    h = stacked_channels(cs, theta)
    for b in range(d.B):
        for k in range(d.K):
            for p in range(d.P):
                G = np.vstack([cs.G[b, r, p] for r in range(d.R)])  # RN x M
                F = np.vstack([cs.F[r, k, p] for r in range(d.R)])  # RN x U
                dense = cs.H[b, k, p].conj().T + F.conj().T @ Theta.conj().T @ G
                np.testing.assert_allclose(effective_channel(cs, theta, b, k, p), dense, atol=1e-12)
                np.testing.assert_allclose(h[k, p, b * d.M:(b + 1) * d.M].conj().T, dense, atol=1e-12)


def test_channel_set_shape_checks_and_roundtrip(tmp_path):
    cfg = scenario_fig7()
    cfg = cfg.replace(dims=cfg.dims.replace(N=4, M=2))
    cs = generate_channel_set(cfg)
    cs.save(tmp_path / "cs.json")
    back = ChannelSet.load(tmp_path / "cs.json")
    for name in ("H", "G", "F"):
        np.testing.assert_array_equal(getattr(back, name), getattr(cs, name))
    with pytest.raises(ValueError):
        ChannelSet(cs.dims, cs.H[..., :1], cs.G, cs.F)


def test_resizing_one_link_keeps_other_draws():
    cfg = scenario_fig7()
    small = generate_channel_set(cfg.replace(dims=cfg.dims.replace(N=8)))
    large = generate_channel_set(cfg.replace(dims=cfg.dims.replace(N=16)))
    np.testing.assert_array_equal(small.H, large.H)
