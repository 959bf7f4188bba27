import numpy as np
import pytest

from trimine import config
from trimine.core import EmbeddingSet


@pytest.fixture(autouse=True)
def isolated_dirs(tmp_path, monkeypatch):
    """Keep log files and default run directories inside the test's tmp dir."""
    monkeypatch.setattr(config, "LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setattr(config, "RUNS_DIR", str(tmp_path / "runs"))


def make_blobs(class_count=3, per_class=10, dim=4, separation=20.0, sigma=1.0, seed=0) -> EmbeddingSet:
    """Well separated Gaussian clusters along the coordinate axes."""
    rng = np.random.default_rng(seed)
    means = np.zeros((class_count, dim))
    for k in range(class_count):
        means[k, k % dim] = separation * (1 + k // dim)
    vectors = np.vstack([means[k] + sigma * rng.standard_normal((per_class, dim)) for k in range(class_count)])
    labels = np.repeat(np.arange(class_count), per_class)
    return EmbeddingSet(vectors, labels, class_count)


@pytest.fixture
def blobs():
    return make_blobs()
