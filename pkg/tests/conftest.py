import numpy as np
import pytest

from dcforecast.data_io import DatasetTable


def make_table(features, labels, dataset_id="t", domain=""):
    return DatasetTable(features=np.asarray(features, dtype=np.float64),
                        labels=np.asarray(labels, dtype=np.int64),
                        dataset_id=dataset_id, domain=domain)


def random_small_table(rng, max_n=12, max_d=3, max_classes=3):
    """A random table where every class has >= 2 rows (retry until valid)."""
    while True:
        n = int(rng.integers(4, max_n + 1))
        d = int(rng.integers(1, max_d + 1))
        c = int(rng.integers(2, max_classes + 1))
        labels = rng.integers(0, c, size=n)
        counts = np.bincount(labels, minlength=c)
        if (counts < 2).any():
            continue
        # mix of continuous values and repeats so distance/threshold ties occur
        feats = np.round(rng.normal(0, 2, size=(n, d)), 1)
        return make_table(feats, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
