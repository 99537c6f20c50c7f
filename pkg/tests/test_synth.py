import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_measure
from rwb.errors import InputError
from rwb.fixed import rwb_cost
from rwb.measures import DiscreteMeasure, WeightedMeasureSet
from rwb.ot import wasserstein_distance
from rwb.synth import (
    REPORT_COLUMNS,
    ContaminationSpec,
    contaminate,
    evaluate,
    gen_gaussian_dataset,
    lloyd,
    noise_atoms,
    quantize_pointcloud,
    report_csv,
)

seeds = st.integers(0, 2**31 - 1)


class TestGenerator:
    def test_single_point_at_center(self):
        Q = gen_gaussian_dataset(1, 1, 2, 0.0, 0)
        assert Q.m == 1 and Q[0].n == 1
        assert np.all((0 <= Q[0].locations) & (Q[0].locations <= 3))

    def test_deterministic(self):
        assert gen_gaussian_dataset(5, 4, 3, 0.5, 11).measures == gen_gaussian_dataset(5, 4, 3, 0.5, 11).measures

    def test_size_contract(self):
        Q = gen_gaussian_dataset(500, 8, 2, 0.25, 0)
        assert Q.m == 500 and all(mu.n == 8 and mu.dim == 2 for mu in Q)
        np.testing.assert_allclose(Q[0].weights, 1 / 8)

    def test_atoms_share_centers(self):
        Q = gen_gaussian_dataset(3, 8, 2, 0.0, 4, n_clusters=4)
        for mu in Q:
            np.testing.assert_array_equal(mu.locations[:4], mu.locations[4:])
            np.testing.assert_array_equal(mu.locations, Q[0].locations)

    def test_invalid_sizes(self):
        with pytest.raises(InputError):
            gen_gaussian_dataset(0, 1, 1, 0.1, 0)
        with pytest.raises(InputError):
            gen_gaussian_dataset(1, 1, 1, -0.1, 0)


class TestContamination:
    def setup_method(self):
        self.Q = gen_gaussian_dataset(6, 8, 2, 0.3, 1)

    def test_identity(self):
        out = contaminate(self.Q, ContaminationSpec(0.0, rng_seed=3))
        assert out.measures == self.Q.measures

    def test_mixture_mass(self):
        out = contaminate(self.Q, ContaminationSpec(0.2, 60.0, 1.0, rng_seed=3))
        for mu, nu in zip(self.Q, out):
            assert nu.n == mu.n + noise_atoms(mu.n)
            np.testing.assert_allclose(nu.weights[: mu.n].sum(), 0.8)
            np.testing.assert_allclose(nu.locations[: mu.n], mu.locations)

    def test_zero_shift(self):
        spec = ContaminationSpec(0.2, 60.0, 1.0, rng_seed=3)
        a = contaminate(self.Q, spec)
        b = contaminate(self.Q, ContaminationSpec(0.2, 60.0, 1.0, self.Q.m, 0.0, rng_seed=3))
        for mu, nu in zip(a, b):
            np.testing.assert_array_equal(mu.weights, nu.weights)
            np.testing.assert_allclose(mu.locations, nu.locations)

    def test_shift_moves_whole_measures(self):
        out = contaminate(self.Q, ContaminationSpec(0.0, shift_count=2, shift_std=5.0, rng_seed=3))
        moved = [not np.array_equal(a.locations, b.locations) for a, b in zip(self.Q, out)]
        assert sum(moved) == 2
        for a, b in zip(self.Q, out):
            delta = b.locations - a.locations
            np.testing.assert_allclose(delta, np.broadcast_to(delta[0], delta.shape), atol=1e-12)

    def test_noise_atom_count(self):
        assert [noise_atoms(n) for n in (1, 4, 5, 8, 9)] == [1, 1, 2, 2, 3]

    @pytest.mark.parametrize(
        "kw", [{"zeta": 1.0}, {"zeta": -0.1}, {"zeta": 0.1, "noise_std": -1}, {"zeta": 0.1, "shift_count": -1}]
    )
    def test_spec_validation(self, kw):
        with pytest.raises(InputError):
            ContaminationSpec(**kw)

    def test_too_many_shifts(self):
        with pytest.raises(InputError):
            contaminate(self.Q, ContaminationSpec(0.1, shift_count=7))

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.floats(0.0, 0.95), st.integers(0, 6))
    def test_validity(self, seed, zeta, shifts):
        out = contaminate(self.Q, ContaminationSpec(zeta, 10.0, 5.0, shifts, 2.0, seed))
        for mu in out:
            assert mu.weights.min() >= 0
            np.testing.assert_allclose(mu.weights.sum(), 1.0, atol=1e-12)


class TestQuantization:
    def test_distinct_points(self):
        X = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
        mu = quantize_pointcloud(X, 3, 0)
        order = np.lexsort(mu.locations.T[::-1])
        np.testing.assert_allclose(mu.locations[order], X[np.lexsort(X.T[::-1])])
        np.testing.assert_allclose(mu.weights, 1 / 3)

    def test_identical_points(self):
        mu = quantize_pointcloud(np.ones((10, 2)), 1, 0)
        np.testing.assert_allclose(mu.locations, [[1.0, 1.0]])
        np.testing.assert_allclose(mu.weights, [1.0])

    def test_two_blobs(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(0, 0.1, (30, 2)), rng.normal(10, 0.1, (70, 2))])
        mu = quantize_pointcloud(X, 2, 1)
        np.testing.assert_allclose(np.sort(mu.weights), [0.3, 0.7])

    def test_k_too_large(self):
        with pytest.raises(InputError):
            quantize_pointcloud(np.zeros((3, 2)), 4, 0)

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.integers(1, 8))
    def test_objective_non_increasing(self, seed, k):
        X = np.random.default_rng(seed).normal(size=(40, 2))
        _, labels, history = lloyd(X, k, seed)
        assert all(b <= a * (1 + 1e-12) for a, b in zip(history, history[1:]))
        np.testing.assert_allclose(quantize_pointcloud(X, k, seed).weights.sum(), 1.0)


class TestEvaluate:
    def test_reference_has_zero_distance(self, rng):
        Q = gen_gaussian_dataset(5, 3, 2, 0.2, 0)
        nu = random_measure(rng, 3)
        rep = evaluate(Q, nu, nu, 2, runtime=1.5)
        assert rep.wd == pytest.approx(0.0, abs=1e-7) and rep.runtime == 1.5
        assert rep.cost == pytest.approx(rwb_cost(Q, nu, 0.0, 2))

    def test_delegates_distance(self):
        mu = DiscreteMeasure([[0.0], [2.0]], [0.4, 0.6])
        nu = DiscreteMeasure([[1.0], [3.0]], [0.5, 0.5])
        Q = WeightedMeasureSet((mu,))
        assert evaluate(Q, mu, nu, 1).wd == pytest.approx(wasserstein_distance(mu, nu, 1))

    def test_deterministic(self, rng):
        Q = gen_gaussian_dataset(5, 3, 2, 0.2, 0)
        a, b = random_measure(rng, 3), random_measure(rng, 2)
        assert evaluate(Q, a, b) == evaluate(Q, a, b)

    def test_csv_layout(self):
        text = report_csv([{"method": "robust", "zeta": 0.2, "wd": 0.1, "cost": 2.0}])
        header, row = text.strip().split("\n")
        assert header.split(",") == list(REPORT_COLUMNS)
        assert row == "robust,0.2,,,,0.1,2.0"
