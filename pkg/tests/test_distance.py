import numpy as np
import pytest

from trimine.core import EmbeddingSet, Metric, MetricKind, distance
from trimine.distance import DistanceMatrix, outlier_mask, pairwise, pairwise_between, row_zscores
from trimine.errors import UsageError

METRICS = [
    Metric(MetricKind.SQUARED_EUCLIDEAN),
    Metric(MetricKind.EUCLIDEAN),
    Metric(MetricKind.SQUARED_EUCLIDEAN, True),
    Metric(MetricKind.EUCLIDEAN, True),
]


class TestPairwise:
    def test_two_points(self):
        E = EmbeddingSet([[0.0, 0.0], [3.0, 4.0]], [0, 1], 2)
        D = pairwise(E)
        np.testing.assert_array_equal(D.values, [[0.0, 25.0], [25.0, 0.0]])

    @pytest.mark.parametrize("metric", METRICS, ids=lambda m: f"{m.kind.value}-{m.normalize_inputs}")
    def test_matches_point_distance(self, metric):
        rng = np.random.default_rng(0)
        E = EmbeddingSet(rng.standard_normal((12, 5)), np.arange(12) % 3, 3)
        D = pairwise(E, metric)
        for i in range(len(E)):
            for j in range(len(E)):
                if i != j:
                    assert D.values[i, j] == pytest.approx(distance(E.vectors[i], E.vectors[j], metric), rel=1e-12)

    def test_symmetric_and_zero_diagonal(self, blobs):
        D = pairwise(blobs)
        assert np.array_equal(D.values, D.values.T)
        assert np.all(np.diag(D.values) == 0)
        assert not D.values.flags.writeable

    def test_between_matches_pairwise(self, blobs):
        D = pairwise(blobs)
        np.testing.assert_allclose(pairwise_between(blobs.vectors, blobs.vectors), D.values, atol=1e-9)

    def test_between_dimension_mismatch(self):
        with pytest.raises(UsageError):
            pairwise_between(np.ones((2, 3)), np.ones((2, 4)))


class TestDistanceMatrixValidation:
    def test_rejects_asymmetric(self):
        with pytest.raises(UsageError):
            DistanceMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]), Metric())

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(UsageError):
            DistanceMatrix(np.array([[1.0, 1.0], [1.0, 0.0]]), Metric())

    def test_rejects_negative(self):
        with pytest.raises(UsageError):
            DistanceMatrix(np.array([[0.0, -1.0], [-1.0, 0.0]]), Metric())


class TestOutliers:
    def test_injected_far_point_is_excluded(self):
        rng = np.random.default_rng(1)
        vectors = rng.standard_normal((40, 3))
        vectors[17] = [200.0, 200.0, 200.0]
        labels = np.arange(40) % 4
        E = EmbeddingSet(vectors, labels, 4)
        mask = outlier_mask(pairwise(E), z_threshold=3.0)
        anchors = [i for i in range(40) if i != 17]
        assert mask.excluded[anchors, 17].all()
        # the far point is the only outlier any ordinary anchor sees
        others = np.delete(mask.excluded[anchors], 17, axis=1)
        assert not others.any()

    def test_infinite_threshold_excludes_nothing(self, blobs):
        mask = outlier_mask(pairwise(blobs), z_threshold=float("inf"))
        assert mask.excluded_count == 0

    def test_zscores_ignore_the_diagonal(self):
        E = EmbeddingSet([[0.0], [1.0], [3.0]], [0, 1, 1], 2)
        z = row_zscores(pairwise(E))
        assert np.all(np.isneginf(np.diag(z)))
        # row 0 has distances 1 and 9: mean 5, population std 4
        assert z[0, 1] == pytest.approx(-1.0)
        assert z[0, 2] == pytest.approx(1.0)

    def test_needs_three_instances(self):
        E = EmbeddingSet([[0.0], [1.0]], [0, 1], 2)
        with pytest.raises(UsageError):
            row_zscores(pairwise(E))

    def test_nan_threshold(self, blobs):
        with pytest.raises(UsageError):
            outlier_mask(pairwise(blobs), z_threshold=float("nan"))


class TestRowBlocks:
    @pytest.mark.parametrize("block_rows", [1, 3, 7, 30])
    def test_block_size_does_not_change_distances(self, blobs, block_rows):
        assert np.array_equal(pairwise(blobs, block_rows=block_rows).values, pairwise(blobs).values)

    @pytest.mark.parametrize("block_rows", [1, 4, 11])
    def test_block_size_does_not_change_zscores(self, block_rows):
        rng = np.random.default_rng(3)
        E = EmbeddingSet(rng.standard_normal((23, 4)), np.arange(23) % 3, 3)
        D = pairwise(E)
        np.testing.assert_allclose(row_zscores(D, block_rows=block_rows), row_zscores(D), rtol=1e-12)
        np.testing.assert_array_equal(outlier_mask(D, 1.0, block_rows=block_rows).excluded,
                                      outlier_mask(D, 1.0).excluded)

    def test_zero_block_rows(self, blobs):
        with pytest.raises(UsageError, match="block_rows"):
            pairwise(blobs, block_rows=0)
        with pytest.raises(UsageError, match="block_rows"):
            row_zscores(pairwise(blobs), block_rows=0)
