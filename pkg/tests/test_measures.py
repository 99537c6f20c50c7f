import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rwb.errors import InputError, ParseError
from rwb.measures import (
    DiscreteMeasure,
    WeightedMeasureSet,
    build_cost_matrix,
    load_dataset,
    load_measure,
    save_dataset,
    save_measure,
    stack_supports,
)

coords = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def points(n, d):
    return arrays(np.float64, (n, d), elements=coords)


class TestCostMatrix:
    def test_identical_points(self):
        np.testing.assert_array_equal(build_cost_matrix([[0.0]], [[0.0]], 2).entries, [[0.0]])

    def test_one_dimensional_z1(self):
        C = build_cost_matrix([[0.0], [2.0]], [[1.0], [3.0]], 1).entries
        np.testing.assert_allclose(C, [[1, 3], [1, 1]])

    def test_pythagorean_triple(self):
        np.testing.assert_allclose(build_cost_matrix([[0, 0]], [[3, 4]], 2).entries, [[25.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            build_cost_matrix([[0, 0]], [[0, 0, 0]], 2)

    def test_exponent_below_one(self):
        with pytest.raises(InputError):
            build_cost_matrix([[0]], [[1]], 0.5)

    @settings(max_examples=40, deadline=None)
    @given(points(4, 2), points(3, 2), st.sampled_from([1.0, 2.0, 3.0]))
    def test_transpose_symmetry(self, X, Y, z):
        np.testing.assert_allclose(
            build_cost_matrix(X, Y, z).entries, build_cost_matrix(Y, X, z).entries.T
        )

    @settings(max_examples=40, deadline=None)
    @given(points(5, 3), st.sampled_from([1.0, 2.0]))
    def test_zero_diagonal(self, X, z):
        np.testing.assert_array_equal(np.diag(build_cost_matrix(X, X, z).entries), 0.0)

    @settings(max_examples=60, deadline=None)
    @given(points(3, 2), st.sampled_from([1.0, 2.0, 3.0]), st.sampled_from([0.25, 0.5, 1.0]))
    def test_generalized_triangle_inequality(self, P, z, s):
        a, b, c = P
        C = lambda u, v: build_cost_matrix([u], [v], z).entries[0, 0]  # noqa: E731
        rhs = (1 + s) ** (z - 1) * C(a, c) + (1 + 1 / s) ** (z - 1) * C(b, c)
        assert C(a, b) <= rhs * (1 + 1e-12) + 1e-9


class TestDiscreteMeasure:
    def test_weight_sum_enforced(self):
        with pytest.raises(InputError):
            DiscreteMeasure([[0.0]], [0.9])

    def test_negative_weight(self):
        with pytest.raises(InputError):
            DiscreteMeasure([[0.0], [1.0]], [1.5, -0.5])

    def test_nan_coordinate(self):
        with pytest.raises(InputError):
            DiscreteMeasure([[np.nan]], [1.0])

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            DiscreteMeasure([[0.0], [1.0]], [1.0])

    def test_immutable(self):
        mu = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
        with pytest.raises(ValueError):
            mu.weights[0] = 1.0

    def test_normalized(self):
        mu = DiscreteMeasure.normalized([[0.0], [1.0]], [1.0, 3.0])
        np.testing.assert_allclose(mu.weights, [0.25, 0.75])

    def test_equality_and_hash(self):
        a = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
        b = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
        assert a == b and hash(a) == hash(b)


class TestMeasureSet:
    def test_default_weights(self):
        Q = WeightedMeasureSet((DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0])))
        np.testing.assert_array_equal(Q.set_weights, [1.0, 1.0])

    def test_nonpositive_weight(self):
        with pytest.raises(InputError):
            WeightedMeasureSet((DiscreteMeasure.dirac([0.0]),), [0.0])

    def test_mixed_dimensions(self):
        with pytest.raises(InputError):
            WeightedMeasureSet((DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([0.0, 1.0])))

    def test_stack_supports_pads_with_zero_weight(self):
        X, A = stack_supports(
            [DiscreteMeasure.uniform([[0.0], [1.0], [2.0]]), DiscreteMeasure.dirac([5.0])]
        )
        assert X.shape == (2, 3, 1)
        np.testing.assert_allclose(A[1], [1.0, 0.0, 0.0])


class TestJsonIO:
    def test_load_basic(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text('{"points":[[0],[1]],"weights":[0.5,0.5]}')
        mu = load_measure(p)
        assert mu.n == 2
        np.testing.assert_allclose(mu.weights, [0.5, 0.5])

    def test_bad_weight_sum(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text('{"points":[[0]],"weights":[0.9]}')
        with pytest.raises(ParseError):
            load_measure(p)

    def test_normalize_on_request(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text('{"points":[[0]],"weights":[0.9]}')
        np.testing.assert_allclose(load_measure(p, normalize=True).weights, [1.0])

    def test_malformed_reports_position(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text('{"points": [[0]],\n "weights": [1.0,]}')
        with pytest.raises(ParseError, match=r"m\.json:2:\d+"):
            load_measure(p)

    def test_nan_literal_rejected(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text('{"points":[[NaN]],"weights":[1.0]}')
        with pytest.raises(ParseError):
            load_measure(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_measure(tmp_path / "nope.json")

    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        mu = DiscreteMeasure.normalized(rng.normal(size=(60, 3)), rng.random(60))
        save_measure(mu, tmp_path / "m.json")
        back = load_measure(tmp_path / "m.json")
        np.testing.assert_array_equal(back.locations, mu.locations)
        np.testing.assert_array_equal(back.weights, mu.weights)

    def test_dataset_round_trip_and_default_weights(self, tmp_path):
        Q = WeightedMeasureSet(
            (DiscreteMeasure.dirac([0.0, 1.0]), DiscreteMeasure.uniform([[1.0, 2.0], [3.0, 4.0]])),
            [2.0, 0.5],
        )
        save_dataset(Q, tmp_path / "q.json")
        back = load_dataset(tmp_path / "q.json")
        assert back.measures == Q.measures
        np.testing.assert_array_equal(back.set_weights, Q.set_weights)
        obj = json.loads((tmp_path / "q.json").read_text())
        del obj["set_weights"]
        (tmp_path / "q2.json").write_text(json.dumps(obj))
        np.testing.assert_array_equal(load_dataset(tmp_path / "q2.json").set_weights, [1.0, 1.0])
