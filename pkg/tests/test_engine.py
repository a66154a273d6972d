import numpy as np
import pytest
from scipy.stats import chi2_contingency, chisquare

from qlbm.engine import (
    count_leaves,
    enumerate_branches,
    estimate_density,
    gate_accounting,
    presample_instructions,
    run_selection_chain,
    run_ensemble,
    run_hybrid,
    run_shot,
    sample_selection_chain,
    shot_rng,
    static_collision_circuit,
)
from qlbm.errors import DomainError, UsageError
from qlbm.lattice import make_velocity_set, run_digital
from qlbm.plan import build_pair_selection_plan
from qlbm.statevector import amplitude_encode

D1Q3 = make_velocity_set("D1Q3")
D2Q9 = make_velocity_set("D2Q9")


def boxcar8():
    rho = np.full(8, 0.1)
    rho[3:5] = 0.2
    return rho


def goodness_of_fit(counts, reference):
    expected = reference.reshape(-1) / reference.sum() * counts.sum()
    return chisquare(counts.reshape(-1), expected).pvalue


class TestPerShot:
    def test_single_shot(self):
        site, stats = run_shot(boxcar8(), 0.1, D1Q3, 3, shot_rng(0, 0))
        assert 0 <= site < 8
        assert stats.steps == 3
        assert stats.ucry == stats.pair_measurements == stats.streaming

    def test_records_selection_probability(self):
        rng = np.random.default_rng(1)
        plan = build_pair_selection_plan(D2Q9)
        for _ in range(50):
            rec = []
            reg = amplitude_encode(rng.uniform(0.1, 1.0, (4, 4)))
            entry = run_selection_chain(reg, plan, rng, records=rec)
            assert len(rec) == plan.measurements_for(entry)
            for m, r in enumerate(rec):
                assert r.p_zero == pytest.approx([4 / 9, 2 / 5, 2 / 3, 1 / 2][m], abs=1e-12)

    def test_deterministic(self):
        a = estimate_density(boxcar8(), 0.1, D1Q3, 2, 200, seed=5)
        b = estimate_density(boxcar8(), 0.1, D1Q3, 2, 200, seed=5)
        c = estimate_density(boxcar8(), 0.1, D1Q3, 2, 200, seed=6)
        np.testing.assert_array_equal(a.counts, b.counts)
        assert not np.array_equal(a.counts, c.counts)

    def test_mass_and_distribution(self):
        est = estimate_density(boxcar8(), 0.1, D1Q3, 2, 3000, seed=0)
        assert est.density.sum() == pytest.approx(boxcar8().sum(), rel=1e-12)
        assert est.counts.sum() == 3000
        assert goodness_of_fit(est.counts, run_digital(boxcar8(), 0.1, D1Q3, 2)) > 1e-3

    def test_bad_arguments(self):
        with pytest.raises(UsageError):
            estimate_density(boxcar8(), 0.1, D1Q3, 1, 0)
        with pytest.raises(UsageError):
            run_shot(boxcar8(), 0.1, D1Q3, -1, shot_rng(0, 0))
        with pytest.raises(DomainError):
            estimate_density(boxcar8(), 0.5, D1Q3, 1, 10)


class TestEnsemble:
    def test_deterministic_per_seed(self, backend):
        a = run_ensemble(boxcar8(), 0.1, D1Q3, 4, 10_000, seed=3, backend=backend)
        b = run_ensemble(boxcar8(), 0.1, D1Q3, 4, 10_000, seed=3, backend=backend)
        c = run_ensemble(boxcar8(), 0.1, D1Q3, 4, 10_000, seed=4, backend=backend)
        np.testing.assert_array_equal(a.counts, b.counts)
        assert a.stats == b.stats
        assert not np.array_equal(a.counts, c.counts)

    @pytest.mark.parametrize("steps", [0, 1, 5])
    def test_matches_digital_1d(self, backend, steps):
        rho0 = boxcar8()
        est = run_ensemble(rho0, 0.1, D1Q3, steps, 200_000, seed=1, backend=backend)
        assert est.counts.sum() == 200_000
        assert est.density.sum() == pytest.approx(rho0.sum(), rel=1e-12)
        assert goodness_of_fit(est.counts, run_digital(rho0, 0.1, D1Q3, steps)) > 1e-3

    def test_matches_digital_2d(self, backend):
        rng = np.random.default_rng(0)
        rho0 = rng.uniform(0.5, 1.5, (4, 8))
        u = rng.uniform(-0.08, 0.08, (4, 8, 2))
        est = run_ensemble(rho0, u, D2Q9, 3, 200_000, seed=2, backend=backend)
        assert goodness_of_fit(est.counts, run_digital(rho0, u, D2Q9, 3)) > 1e-3

    def test_accounting_consistency(self, backend):
        est = run_ensemble(boxcar8(), 0.1, D1Q3, 6, 50_000, seed=0, backend=backend)
        s = est.stats
        assert s.steps == 6 * 50_000
        assert s.ucry == s.pair_measurements == s.streaming == s.cyclic_shifts
        assert s.selection_measurements == s.selection_ry == 6 * 50_000
        assert s.cnot_equivalents == s.ucry * 8

    def test_d2q9_selection_measurement_count(self, backend):
        rho0 = np.ones((4, 4))
        est = run_ensemble(rho0, np.zeros((4, 4, 2)), D2Q9, 1, 100_000, seed=0, backend=backend)
        s = est.stats
        # rest costs 1 measurement, pair m costs min(m+1, 4); the diagonal pairs shift twice
        assert s.selection_measurements > 100_000
        assert s.cyclic_shifts > s.ucry

    def test_single_shot_run(self, backend):
        est = run_ensemble(boxcar8(), 0.1, D1Q3, 7, 1, seed=9, backend=backend)
        assert est.counts.sum() == 1

    def test_backends_agree_in_distribution(self):
        rho0 = boxcar8()
        a = run_ensemble(rho0, 0.1, D1Q3, 4, 200_000, seed=1, backend="numpy")
        b = run_ensemble(rho0, 0.1, D1Q3, 4, 200_000, seed=1, backend="numba")
        assert chi2_contingency(np.vstack([a.counts, b.counts])).pvalue > 1e-3

    def test_numpy_live_row_bound(self):
        rho0 = boxcar8()
        est = run_ensemble(rho0, 0.1, D1Q3, 6, 20_000, seed=0, backend="numpy", max_live_nodes=50)
        assert est.counts.sum() == 20_000
        assert goodness_of_fit(est.counts, run_digital(rho0, 0.1, D1Q3, 6)) > 1e-3

    def test_threads_do_not_change_result(self):
        a = run_ensemble(boxcar8(), 0.1, D1Q3, 3, 10_000, seed=0, backend="numba", threads=1)
        b = run_ensemble(boxcar8(), 0.1, D1Q3, 3, 10_000, seed=0, backend="numba", threads=1)
        np.testing.assert_array_equal(a.counts, b.counts)


class TestOracle:
    @pytest.mark.parametrize("steps", [0, 1, 2, 3])
    def test_equals_digital(self, steps):
        rho0 = np.random.default_rng(steps).uniform(0.05, 1.0, 8)
        np.testing.assert_allclose(
            enumerate_branches(rho0, 0.1, D1Q3, steps), run_digital(rho0, 0.1, D1Q3, steps), atol=1e-12
        )

    def test_leaf_count(self):
        assert count_leaves(D1Q3, 3) == 27
        assert count_leaves(D2Q9, 2) == 81

    def test_leaf_guard(self):
        with pytest.raises(UsageError, match="leaves"):
            enumerate_branches(boxcar8(), 0.1, D1Q3, 20)


class TestHybrid:
    def test_presampled_frequencies(self):
        instr = presample_instructions(D1Q3, 10, 100_000, np.random.default_rng(0))
        assert instr.entries.shape == (10, 100_000)
        frac = np.mean(instr.entries == 0)
        assert abs(frac - 2 / 3) < 3 * np.sqrt(2 / 9 / 1e6)

    def test_no_selection_measurements(self, backend):
        rho0 = np.full(8, 0.1)
        u = 0.1 * np.arange(8) / 7 + 0.1
        instr = presample_instructions(D1Q3, 10, 20_000, np.random.default_rng(1))
        est = run_hybrid(rho0, u, D1Q3, instr, seed=0, backend=backend)
        assert est.stats.selection_measurements == 0
        assert est.stats.selection_ry == 0
        assert est.stats.ucry == int(np.count_nonzero(instr.entries))
        assert est.counts.sum() == 20_000
        assert goodness_of_fit(est.counts, run_digital(rho0, u, D1Q3, 10)) > 1e-3

    def test_deterministic(self, backend):
        instr = presample_instructions(D1Q3, 4, 5000, np.random.default_rng(1))
        a = run_hybrid(boxcar8(), 0.1, D1Q3, instr, seed=2, backend=backend)
        b = run_hybrid(boxcar8(), 0.1, D1Q3, instr, seed=2, backend=backend)
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_plan_mismatch(self):
        instr = presample_instructions(D2Q9, 2, 10, np.random.default_rng(0))
        with pytest.raises(UsageError):
            run_hybrid(boxcar8(), 0.1, D1Q3, instr)

    def test_bad_shape(self):
        with pytest.raises(UsageError):
            presample_instructions(D1Q3, 0, 10, np.random.default_rng(0))


class TestSelectionChainSampling:
    def test_d1q3_frequencies(self):
        entries = sample_selection_chain(build_pair_selection_plan(D1Q3), 100_000, seed=0)
        assert abs(np.mean(entries == 0) - 2 / 3) < 4 * np.sqrt(2 / 9 / 1e5)


class TestAccounting:
    def test_gate_accounting_dict(self):
        est = run_ensemble(boxcar8(), 0.1, D1Q3, 1, 30_000, seed=0)
        acc = gate_accounting(est, D1Q3, 3)
        assert acc["expected_ucry_fraction"] == pytest.approx(1 / 3)
        assert acc["cnot_equivalents"] == acc["ucry_applications"] * 8
        assert acc["measurements"] == acc["selection_measurements"] + acc["pair_measurements"]


class TestStaticCircuit:
    def test_amplitudes(self):
        rho = boxcar8()
        reg = static_collision_circuit(rho, 0.1, D1Q3)
        a = reg.amplitudes.reshape(8, 4)
        r = rho / rho.sum()
        np.testing.assert_allclose(a[:, 0], np.sqrt(2 / 3 * r), atol=1e-12)
        np.testing.assert_allclose(a[:, 2], np.sqrt(1 / 6 * 1.3 * r), atol=1e-12)
        np.testing.assert_allclose(a[:, 3], np.sqrt(1 / 6 * 0.7 * r), atol=1e-12)
        np.testing.assert_allclose(a[:, 1], 0.0, atol=1e-12)

    def test_rejects_d2q9(self):
        with pytest.raises(UsageError):
            static_collision_circuit(np.ones(8), 0.1, D2Q9)
