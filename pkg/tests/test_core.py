import numpy as np
import pytest

from trimine.core import (
    BatchSpec,
    EmbeddingSet,
    ExtremePolicy,
    Metric,
    MetricKind,
    Rng,
    distance,
    unit_rows,
    unit_rows_backward,
)
from trimine.errors import UsageError

SQ = Metric(MetricKind.SQUARED_EUCLIDEAN)
EU = Metric(MetricKind.EUCLIDEAN)


class TestDistance:
    """Point-to-point distances under every metric."""

    def test_three_four_five(self):
        assert distance([0.0, 0.0], [3.0, 4.0], SQ) == 25.0
        assert distance([0.0, 0.0], [3.0, 4.0], EU) == 5.0

    @pytest.mark.parametrize("metric", [SQ, EU, Metric(MetricKind.SQUARED_EUCLIDEAN, True), Metric(MetricKind.EUCLIDEAN, True)])
    def test_identical_vectors(self, metric):
        assert distance([1.5, -2.0], [1.5, -2.0], metric) == 0.0

    def test_orthogonal_unit_vectors(self):
        assert distance([1.0, 0.0], [0.0, 1.0], Metric(MetricKind.SQUARED_EUCLIDEAN, True)) == pytest.approx(2.0)

    def test_normalized_ranges(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            u, v = rng.standard_normal((2, 5))
            assert 0.0 <= distance(u, v, Metric(MetricKind.SQUARED_EUCLIDEAN, True)) <= 4.0 + 1e-12
            assert 0.0 <= distance(u, v, Metric(MetricKind.EUCLIDEAN, True)) <= 2.0 + 1e-12

    def test_symmetric_exactly(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            u, v = rng.standard_normal((2, 7))
            assert distance(u, v, SQ) == distance(v, u, SQ)
            assert distance(u, v, EU) == distance(v, u, EU)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a, b, c = rng.standard_normal((3, 4))
            assert distance(a, c, EU) <= distance(a, b, EU) + distance(b, c, EU) + 1e-12

    def test_translation_and_rotation_invariance(self):
        rng = np.random.default_rng(4)
        u, v, shift = rng.standard_normal((3, 6))
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        base = distance(u, v, SQ)
        assert distance(u + shift, v + shift, SQ) == pytest.approx(base, abs=1e-9)
        assert distance(Q @ u, Q @ v, SQ) == pytest.approx(base, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            distance([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_non_finite(self):
        with pytest.raises(UsageError):
            distance([1.0, np.nan], [1.0, 2.0])

    def test_zero_vector_cannot_be_normalized(self):
        with pytest.raises(UsageError):
            distance([0.0, 0.0], [1.0, 0.0], Metric(MetricKind.EUCLIDEAN, True))


class TestMetricAndPolicy:
    def test_parse_metric(self):
        assert Metric.parse("Euclidean", True) == Metric(MetricKind.EUCLIDEAN, True)
        with pytest.raises(UsageError):
            Metric.parse("cosine")

    def test_parse_policy(self):
        assert ExtremePolicy.parse("EPHN") is ExtremePolicy.EPHN
        assert ExtremePolicy.parse("bh") is ExtremePolicy.HPHN
        with pytest.raises(UsageError):
            ExtremePolicy.parse("hardest")

    def test_flags(self):
        assert not ExtremePolicy.EPHN.hard_positive
        assert ExtremePolicy.EPHN.hard_negative
        assert ExtremePolicy.HPEN.hard_positive
        assert not ExtremePolicy.HPEN.hard_negative
        for policy in (ExtremePolicy.EPEN, ExtremePolicy.EPHN, ExtremePolicy.HPEN, ExtremePolicy.HPHN):
            assert ExtremePolicy.from_flags(policy.hard_positive, policy.hard_negative) is policy

    def test_assorted_has_no_flags(self):
        with pytest.raises(UsageError):
            ExtremePolicy.ASSORTED.hard_positive


class TestBatchSpec:
    def test_online(self):
        spec = BatchSpec.online(45, 9)
        assert spec.per_class == 5

    def test_online_needs_two_per_class(self):
        with pytest.raises(UsageError):
            BatchSpec.online(10, 9)

    def test_offline(self):
        spec = BatchSpec.offline(16)
        assert spec.batch_size == 48
        assert spec.triplet_count == 16


class TestEmbeddingSet:
    def test_read_only(self):
        E = EmbeddingSet(np.ones((4, 2)), [0, 0, 1, 1], 2)
        with pytest.raises(ValueError):
            E.vectors[0, 0] = 5.0

    def test_missing_class(self):
        with pytest.raises(UsageError, match="without any member"):
            EmbeddingSet(np.ones((4, 2)), [0, 0, 2, 2], 3)

    def test_label_out_of_range(self):
        with pytest.raises(UsageError):
            EmbeddingSet(np.ones((2, 2)), [0, 2], 2)

    def test_non_finite(self):
        vectors = np.ones((2, 2))
        vectors[1, 0] = np.inf
        with pytest.raises(UsageError, match="Vector 1"):
            EmbeddingSet(vectors, [0, 1], 2)

    def test_subset_keeps_class_count(self):
        E = EmbeddingSet(np.arange(8.0).reshape(4, 2), [0, 1, 0, 1], 2)
        sub = E.subset([2, 3])
        assert sub.class_count == 2
        np.testing.assert_array_equal(sub.vectors, [[4.0, 5.0], [6.0, 7.0]])


class TestRng:
    def test_same_seed_same_sequence(self):
        assert np.array_equal(Rng(42).random(10), Rng(42).random(10))

    def test_children_are_independent_and_reproducible(self):
        root = Rng(7)
        assert np.array_equal(root.child(1).random(5), Rng(7, (1,)).random(5))
        assert not np.array_equal(root.child(1).random(5), root.child(2).random(5))

    def test_seed_range(self):
        with pytest.raises(UsageError):
            Rng(-1)
        with pytest.raises(UsageError):
            Rng(2**64)


class TestNormalization:
    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((3, 4))
        G = rng.standard_normal((3, 4))
        U, norms = unit_rows(X)
        analytic = unit_rows_backward(G, U, norms)
        numeric = np.zeros_like(X)
        h = 1e-6
        for idx in np.ndindex(X.shape):
            Xp, Xm = X.copy(), X.copy()
            Xp[idx] += h
            Xm[idx] -= h
            numeric[idx] = (np.sum(G * unit_rows(Xp)[0]) - np.sum(G * unit_rows(Xm)[0])) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, atol=1e-8)
