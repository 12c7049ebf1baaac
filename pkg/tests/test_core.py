import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riscf.config import ScenarioConfig, SolverSettings, load_config, save_config, validate
from riscf.core import (
    NetworkDims,
    PhaseConfig,
    PhaseConstraint,
    PrecoderStack,
    db_to_linear,
    dbm_to_watts,
    linear_to_db,
)
from riscf.experiments import scenario_fig4, scenario_fig7


def test_unit_conversions():
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-12)
    assert dbm_to_watts(-120.0) == pytest.approx(1e-15, rel=1e-12)
    assert db_to_linear(-30.0) == pytest.approx(1e-3, rel=1e-12)
    assert linear_to_db(db_to_linear(7.5)) == pytest.approx(7.5)


def test_dims_rules():
    assert NetworkDims(1, 0, 1, 1, 1, 1, 1).problems() == []
    assert any("K must be ≥ 1" in p for p in NetworkDims(1, 1, 0, 1, 1, 1, 1).problems())
    assert any("R must be ≥ 0" in p for p in NetworkDims(1, -1, 1, 1, 1, 1, 1).problems())
    d = NetworkDims(2, 3, 4, 5, 6, 7, 8)
    assert d.precoder_size == 2 * 5 * 8 * 4
    assert d.n_reflectors == 21
    assert d.replace(N=1).N == 1


def test_phase_constraint_parse_and_grid():
    assert PhaseConstraint.parse("f1").kind == "F1"
    assert PhaseConstraint.parse("F2").kind == "F2"
    c = PhaseConstraint.parse("f3:4")
    assert (c.kind, c.levels, str(c)) == ("F3", 4, "f3:4")
    np.testing.assert_allclose(np.angle(c.grid[1]), math.pi / 2)
    with pytest.raises(ValueError):
        PhaseConstraint.parse("f3")
    with pytest.raises(ValueError):
        PhaseConstraint("F2", 4)
    with pytest.raises(ValueError):
        PhaseConstraint("F3", 1)


def test_phase_constraint_membership():
    f1, f2, f3 = PhaseConstraint("F1"), PhaseConstraint("F2"), PhaseConstraint("F3", 2)
    assert f1.contains([0.0, 0.5j, 1.0])
    assert not f1.contains([1.1])
    assert f2.contains([1j, -1])
    assert not f2.contains([0.5])
    assert f3.contains([1, -1])
    assert not f3.contains([1j])
    with pytest.raises(ValueError):
        PhaseConfig([2.0], f1)


def test_precoder_stack_layout():
    d = NetworkDims(B=2, R=0, K=3, M=4, U=1, N=1, P=2)
    w = np.arange(d.precoder_size) + 0j
    W = PrecoderStack(w, d.B, d.M, d.P, d.K)
    b, p, k = 1, 1, 2
    start = ((p * d.K + k) * d.B + b) * d.M
    np.testing.assert_array_equal(W.extract(b, p, k), w[start:start + d.M])
    np.testing.assert_array_equal(W.blocks()[p, k, b], W.extract(b, p, k))
    with pytest.raises(IndexError):
        W.offset(2, 0, 0)
    with pytest.raises(ValueError):
        PrecoderStack(np.zeros(5), 1, 1, 1, 1)


@settings(max_examples=50, deadline=None)
@given(
    B=st.integers(1, 3), M=st.integers(1, 3), P=st.integers(1, 3), K=st.integers(1, 3),
    seed=st.integers(0, 2**31),
)
def test_bs_power_partitions_total_power(B, M, P, K, seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(B * M * P * K) + 1j * rng.standard_normal(B * M * P * K)
    W = PrecoderStack(w, B, M, P, K)
    power = W.bs_power()
    assert power.shape == (B,)
    assert np.sum(power) == pytest.approx(np.vdot(w, w).real, rel=1e-12)
    manual = [sum(np.sum(np.abs(W.extract(b, p, k)) ** 2) for p in range(P) for k in range(K)) for b in range(B)]
    np.testing.assert_allclose(power, manual, rtol=1e-12)


def test_validate_reports():
    cfg = scenario_fig4()
    assert validate(cfg) == []
    assert cfg.dims == NetworkDims(B=2, R=2, K=4, M=8, U=2, N=32, P=6)
    bad = cfg.replace(noise_power=0.0)
    assert any("noise_power" in p for p in validate(bad))
    bad = cfg.replace(dims=cfg.dims.replace(K=0))
    assert any("K must be ≥ 1" in p for p in validate(bad))
    bad = cfg.replace(solver=SolverSettings(rel_tol=0.0))
    assert any("rel_tol" in p for p in validate(bad))
    bad = cfg.replace(dims=cfg.dims.replace(R=3))
    assert any("ris_positions" in p for p in validate(bad))


def test_config_json_roundtrip(tmp_path):
    cfg = scenario_fig7(seed=5, constraint=PhaseConstraint.parse("f3:8"))
    path = tmp_path / "c.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict()
    assert back.constraint == cfg.constraint
    assert json.loads(path.read_text())["rician"]["bs_ris"] == "inf"
    assert math.isinf(back.rician.bs_ris)
    assert ScenarioConfig.from_json(cfg.to_json()).to_dict() == cfg.to_dict()


def test_scalar_power_broadcasts_per_bs():
    cfg = scenario_fig4()
    np.testing.assert_array_equal(cfg.p_max, [1.0, 1.0])
    np.testing.assert_array_equal(cfg.user_weights, np.ones(4))
