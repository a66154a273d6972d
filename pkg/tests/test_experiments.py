import json

import numpy as np
import pytest

from qlbm.errors import ConfigurationError, DomainError
from qlbm.experiments import (
    CaseConfig,
    boxcar_ic,
    compare_hybrid,
    density_csv,
    double_vortex,
    expected_mape_multinomial,
    log_log_slope,
    mape,
    shipped_cases,
    report_json,
    run_case,
    strip_wall_time,
    two_sample_chi2,
    uniform_ic,
    linear_velocity,
    write_files,
)
from qlbm.lattice import LatticeGrid, advection_ratio, make_velocity_set


class TestInitialConditions:
    def test_boxcar_1d(self):
        rho = boxcar_ic(32)
        assert np.count_nonzero(rho == 0.2) == 6
        assert np.count_nonzero(rho == 0.1) == 26
        assert rho.sum() == pytest.approx(3.8)
        assert np.flatnonzero(rho == 0.2).tolist() == list(range(13, 19))

    def test_boxcar_symmetric(self):
        rho = boxcar_ic(32)
        # plateau 13..18 mirrors onto itself about x = 15.5
        np.testing.assert_array_equal(rho, rho[::-1])

    def test_boxcar_2d_square(self):
        rho = boxcar_ic((16, 16))
        assert rho.shape == (16, 16)
        assert np.count_nonzero(rho == 0.2) == 36

    def test_boxcar_too_small(self):
        with pytest.raises(ConfigurationError):
            boxcar_ic(4)

    def test_uniform(self):
        np.testing.assert_array_equal(uniform_ic((32, 16), 1.0), np.ones((16, 32)))
        with pytest.raises(ConfigurationError):
            uniform_ic(8, 0.0)


class TestVelocityFields:
    def test_linear_endpoints(self):
        u = linear_velocity(32)
        assert u.shape == (32, 1)
        assert u[0, 0] == pytest.approx(0.1)
        assert u[-1, 0] == pytest.approx(0.2)
        assert np.all(np.abs(u) / (1 / 3) <= 0.6 + 1e-12)

    def test_vortex_defaults_satisfy_constraint(self):
        u = double_vortex(32, 16)
        assert u.shape == (16, 32, 2)
        ratio = advection_ratio(u, make_velocity_set("D2Q9"), LatticeGrid((32, 16)))
        assert np.abs(ratio).max() < 1

    def test_vortex_centre_row(self):
        u = double_vortex(32, 16)
        # y_j = 8/16 = 0.5 is the centres' row: u vanishes on the left half
        left = np.arange(32) / 32 <= 0.5
        np.testing.assert_allclose(u[8, left, 0], 0.0, atol=1e-12)

    def test_vortex_magnitude_bound(self):
        u = double_vortex(32, 16)
        assert np.linalg.norm(u, axis=-1).max() <= 0.2 + 1e-9

    def test_vortex_rotation_sense(self):
        u = double_vortex(32, 16)
        # left vortex is counter-clockwise: above its centre u_x < 0
        assert u[12, 8, 0] < 0
        # right vortex is clockwise: above its centre u_x > 0
        assert u[12, 24, 0] > 0

    def test_vortex_too_strong(self):
        with pytest.raises(DomainError):
            double_vortex(32, 16, s1=0.3)


class TestMape:
    def test_identical(self):
        assert mape(np.ones(4), np.ones(4)) == 0.0

    def test_hand_value(self):
        assert mape(np.array([0.1, 0.2]), np.array([0.11, 0.18])) == pytest.approx(10.0)

    def test_zero_reference(self):
        with pytest.raises(DomainError):
            mape(np.array([0.0, 1.0]), np.ones(2))

    def test_slope_helper(self):
        s = [1e3, 1e4, 1e5]
        assert log_log_slope(s, [1 / np.sqrt(x) for x in s]) == pytest.approx(-0.5)

    def test_expected_mape_scale(self):
        ref = boxcar_ic(32)
        assert expected_mape_multinomial(ref, 10**6) == pytest.approx(
            expected_mape_multinomial(ref, 10**4) / 10, rel=1e-12
        )


MINIMAL = {"set": "D1Q3", "N": 32, "ic": "boxcar", "u": {"uniform": 0.1}, "T": 1, "shots": 1e6}


class TestConfig:
    def test_minimal_aliases(self):
        cfg = CaseConfig.from_dict(MINIMAL)
        assert cfg.grid == (32,)
        assert cfg.shots == 10**6
        assert cfg.mode == "ensemble" and cfg.seed == 0
        assert cfg.cs2 == pytest.approx(1 / 3)
        assert cfg.velocity_field == {"type": "uniform", "params": {"value": 0.1}}

    def test_round_trip(self):
        cfg = CaseConfig.from_dict(MINIMAL)
        again = CaseConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    def test_non_power_of_two(self):
        with pytest.raises(ConfigurationError, match="power of two"):
            CaseConfig.from_dict({**MINIMAL, "N": 24})

    def test_unknown_mode_suggests(self):
        with pytest.raises(ConfigurationError, match="choose from"):
            CaseConfig.from_dict({**MINIMAL, "mode": "noisy"})
        with pytest.raises(ConfigurationError, match="did you mean 'hybrid'"):
            CaseConfig.from_dict({**MINIMAL, "mode": "hybird"})

    @pytest.mark.parametrize(
        "patch, field",
        [({"T": "ten"}, "steps"), ({"shots": 1.5}, "shots"), ({"set": 3}, "velocity_set"), ({"seed": True}, "seed")],
    )
    def test_ill_typed_field_named(self, patch, field):
        with pytest.raises(ConfigurationError, match=field):
            CaseConfig.from_dict({**MINIMAL, **patch})

    def test_missing_field(self):
        d = dict(MINIMAL)
        del d["T"]
        with pytest.raises(ConfigurationError, match="steps"):
            CaseConfig.from_dict(d)

    def test_unknown_field(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            CaseConfig.from_dict({**MINIMAL, "colour": "red"})

    def test_shipped_cases_round_trip(self):
        cases = shipped_cases()
        assert {"d1q3_one_step", "d2q9_one_step", "vortex_t5", "vortex_t10", "vortex_t25", "hybrid"} <= set(cases)
        for cfg in cases.values():
            assert CaseConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
            cfg.build_density()
            cfg.build_velocity()

    def test_shipped_case_runs_identically_after_round_trip(self):
        cfg = shipped_cases()["d1q3_one_step"].replace(shots=20_000)
        again = CaseConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        np.testing.assert_array_equal(run_case(cfg).rho_estimate, run_case(again).rho_estimate)


class TestRunCase:
    def test_oracle_mode_exact(self):
        cfg = CaseConfig.from_dict(
            {"set": "D1Q3", "N": 8, "ic": {"uniform": 0.1}, "u": "linear", "T": 3, "mode": "oracle"}
        )
        assert run_case(cfg).mape_percent < 1e-8

    @pytest.mark.parametrize("mode", ["digital", "sampled", "ensemble", "hybrid", "oracle"])
    def test_modes(self, mode):
        cfg = CaseConfig.from_dict({**MINIMAL, "N": 8, "T": 2, "shots": 300, "mode": mode, "ic": {"uniform": 0.1}})
        rep = run_case(cfg)
        assert rep.rho_estimate.sum() == pytest.approx(0.8, rel=1e-12)
        assert np.mean(rep.rel_error) * 100 == pytest.approx(rep.mape_percent, rel=1e-12, abs=1e-15)
        if mode in ("digital", "oracle"):
            assert rep.stats is None and rep.mape_percent < 1e-8
        else:
            assert rep.stats.steps == 2 * 300

    def test_seed_changes_estimate_not_reference(self):
        cfg = CaseConfig.from_dict({**MINIMAL, "shots": 5000})
        a, b = run_case(cfg), run_case(cfg.replace(seed=1))
        np.testing.assert_array_equal(a.rho_digital, b.rho_digital)
        assert not np.array_equal(a.rho_estimate, b.rho_estimate)

    def test_report_is_deterministic(self):
        cfg = CaseConfig.from_dict({**MINIMAL, "shots": 5000})
        a, b = report_json(run_case(cfg)), report_json(run_case(cfg))
        assert strip_wall_time(a) == strip_wall_time(b)
        assert density_csv(run_case(cfg)) == density_csv(run_case(cfg))

    def test_csv_columns(self):
        cfg = CaseConfig.from_dict({**MINIMAL, "set": "D2Q9", "N": [8, 8], "u": {"uniform": [0.1, 0.1]}, "shots": 1000})
        header = density_csv(run_case(cfg)).splitlines()[0]
        assert header == "index,x,y,rho_digital,rho_estimate,rel_error"

    def test_compare_hybrid(self):
        cfg = shipped_cases()["hybrid"].replace(shots=20_000)
        res = compare_hybrid(cfg)
        assert res["hybrid"].stats.selection_measurements == 0
        assert res["selection_measurements_saved"] == res["dynamic"].stats.selection_measurements
        assert res["chi2"]["p_value"] > 1e-3

    def test_chi2_degenerate(self):
        r = two_sample_chi2(np.array([1, 0, 0]), np.array([0, 1, 0]))
        assert r["degenerate"]
        r = two_sample_chi2(np.array([1, 0]), np.array([1, 0]))
        assert r["degenerate"] and r["statistic"] is None


class TestWriteFiles:
    def test_writes_all(self, tmp_path):
        write_files(tmp_path / "o", {"a.csv": "x\n", "sub/b.json": "{}\n"})
        assert (tmp_path / "o" / "a.csv").read_text() == "x\n"
        assert (tmp_path / "o" / "sub" / "b.json").exists()
        assert not list((tmp_path / "o").glob(".*.tmp"))
