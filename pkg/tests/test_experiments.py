import math

import numpy as np
import pytest

from riscf import experiments
from riscf.config import SolverSettings, validate
from riscf.experiments import (
    SweepSpec,
    apply_sweep_value,
    run_cell,
    run_sweep,
    scenario_fig4,
    scenario_fig7,
    summary_path,
    trial_seed,
)

FAST = SolverSettings(max_outer=4, warmup_noise_db=0.0)


def tiny_base(seed=0):
    """fig7 geometry shrunk to a few antennas; plain reseeding."""
    cfg = scenario_fig7(seed, solver=FAST)
    return cfg.replace(dims=cfg.dims.replace(M=2, U=1, N=2, P=1), meta={}, name="tiny")


def test_fig4_geometry():
    cfg = scenario_fig4(L=30.0, seed=4)
    assert validate(cfg) == []
    np.testing.assert_allclose(cfg.bs_positions, [[0, -20], [80, -20]])
    np.testing.assert_allclose(cfg.ris_positions, [[30, 3], [50, 3]])
    offsets = np.linalg.norm(cfg.user_positions - [30.0, 0.0], axis=1)
    assert np.all(offsets <= 1.0)
    d = np.linalg.norm(cfg.bs_positions[0] - cfg.ris_positions[0])
    assert d == pytest.approx(37.8021163428716, rel=1e-12)
    d = np.linalg.norm(cfg.bs_positions[0] - cfg.ris_positions[1])
    assert d == pytest.approx(55.036351623268054, rel=1e-12)
    assert cfg.noise_power == pytest.approx(1e-15, rel=1e-12)
    np.testing.assert_array_equal(cfg.p_max, [1.0, 1.0])
    with pytest.raises(ValueError):
        scenario_fig4(L=0.0)


def test_fig4_users_follow_seed_only():
    a, b = scenario_fig4(25.0, 1), scenario_fig4(45.0, 1)
    np.testing.assert_allclose(a.user_positions - [25, 0], b.user_positions - [45, 0], atol=1e-12)
    assert not np.allclose(scenario_fig4(25.0, 2).user_positions, a.user_positions)


def test_fig7_geometry():
    cfg = scenario_fig7()
    assert validate(cfg) == []
    np.testing.assert_allclose(np.linalg.norm(cfg.ris_positions, axis=1), 15.0)
    np.testing.assert_allclose(np.linalg.norm(cfg.user_positions, axis=1), 15.0)
    angles = np.unwrap(np.arctan2(cfg.ris_positions[:, 1], cfg.ris_positions[:, 0]))
    np.testing.assert_allclose(np.diff(angles), 2 * math.pi / 8)
    np.testing.assert_allclose(cfg.bs_positions, [[-10, 0], [10, 0]])
    assert cfg.p_max[0] == pytest.approx(0.1)
    assert cfg.dims.R == 8


def test_sweep_spec_checks():
    with pytest.raises(ValueError):
        SweepSpec("wavelength", (1,))
    with pytest.raises(ValueError):
        SweepSpec("bs_power", ())
    with pytest.raises(ValueError):
        SweepSpec("bs_power", (0,), variants=("f4",))
    spec = SweepSpec.from_dict({"variable": "bs_power", "values": [0, 5], "variants": ["F1", "noris"], "seed": 3})
    assert spec.variants == ("f1", "noris") and spec.master_seed == 3
    assert SweepSpec.from_dict(spec.to_dict()) == spec


def test_trial_seed_is_stable():
    assert trial_seed(0, 1) == trial_seed(0, 1)
    assert len({trial_seed(0, t) for t in range(20)}) == 20


def test_apply_sweep_value():
    base = tiny_base()
    assert apply_sweep_value(base, "bs_power", 10.0, 5).p_max[0] == pytest.approx(10.0)
    assert apply_sweep_value(base, "ris_elements_N", 7, 5).dims.N == 7
    assert apply_sweep_value(base, "bs_antennas_M", 3, 5).seed == 5
    fig4 = apply_sweep_value(scenario_fig4(), "user_distance_L", 40, 2)
    assert fig4.meta["L"] == 40.0 and fig4.seed == 2
    with pytest.raises(ValueError):
        apply_sweep_value(base, "user_distance_L", 40, 2)


def test_one_cell_sweep_writes_row_and_summary(tmp_path):
    spec = SweepSpec("bs_power", (0.0,), trials=1)
    out = tmp_path / "s.csv"
    res = run_sweep(spec, tiny_base(), out)
    assert len(res.rows) == 1 and len(res.summary) == 1
    raw = out.read_text().splitlines()
    summ = summary_path(out).read_text().splitlines()
    assert len(raw) == 2 and len(summ) == 2
    assert raw[0] == ",".join(experiments.RAW_COLUMNS)
    assert res.rows[0]["runtime_s"] == ""


def test_sweep_is_deterministic_and_job_independent(tmp_path):
    spec = SweepSpec("bs_power", (-5.0, 0.0), trials=2, variants=("f1", "f3:2", "noris"))
    a = run_sweep(spec, tiny_base(), tmp_path / "a.csv", json_mirror=True)
    run_sweep(spec, tiny_base(), tmp_path / "b.csv", n_jobs=2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").exists()
    assert a.wsr_table("f1").shape == (2, 2)
    assert np.all(a.mean("f1") > 0)
    # θ = 0 is feasible under F1, so paired trials never fall below the bare network
    assert np.all(a.wsr_table("f1") >= a.wsr_table("noris") - 1e-6)
    assert a.failed == 0


def test_failed_cell_becomes_error_row(tmp_path, monkeypatch):
    real = experiments.run

    def flaky(cfg, cs):
        if cfg.seed == trial_seed(0, 1):
            raise RuntimeError("boom")
        return real(cfg, cs)

    monkeypatch.setattr(experiments, "run", flaky)
    res = run_sweep(SweepSpec("bs_power", (0.0,), trials=3), tiny_base(), tmp_path / "e.csv")
    assert res.failed == 1
    bad = [r for r in res.rows if r["converged"] == "error"]
    assert bad[0]["trial"] == 1 and math.isnan(bad[0]["wsr"])
    s = res.summary[0]
    assert s["trials"] == 2 and s["failed"] == 1 and np.isfinite(s["mean_wsr"])


def test_run_cell_without_variable():
    row = run_cell(tiny_base(3), None, None, "f1", 0, 3, timing=True)
    assert row["sweep_var"] == "" and row["sweep_value"] == ""
    assert row["wsr"] > 0 and row["runtime_s"] >= 0
