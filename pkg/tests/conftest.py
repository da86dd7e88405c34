import numpy as np
import pytest

from app.models.constants import ConstantEntry, ConstantTable, LatticeTruncation
from app.services import tame_constants
from app.services.datum_factory import DatumFactory

TEST_TRUNCATION = LatticeTruncation(sum_radius=24, sup_radius=12, tail_margin=1.1)


def make_table(dim, values, truncation=None):
    """Hand-made table from {(p, n): (K_pn, G_pn)}."""
    truncation = truncation or LatticeTruncation(sum_radius=2, sup_radius=1, tail_margin=1.0)
    entries = [
        ConstantEntry(
            d=dim, p=p, n=n, H=truncation.sum_radius, Kmax=truncation.sup_radius,
            tail_margin=truncation.tail_margin, K_pn=K, G_pn=G,
            argmax_k={"K": [1] + [0] * (dim - 1), "G": [1] + [0] * (dim - 1)}, plateau=True,
        )
        for (p, n), (K, G) in values.items()
    ]
    return ConstantTable(d=dim, truncation=truncation, entries=entries)


def random_field(dim, k_max, seed, amplitude=1.0, decay=0.0):
    return DatumFactory.random_band(dim, 1.0, k_max, seed=seed, amplitude=amplitude, decay=decay)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def table_d3():
    """d=3 constants for n=3 and p in {4, 5} at a test-sized lattice truncation."""
    pairs = tame_constants.required_pairs(3.0, [4.0, 5.0])
    return tame_constants.compute_constants(3, pairs, TEST_TRUNCATION)


@pytest.fixture(scope="session")
def table_d2():
    pairs = tame_constants.required_pairs(2.5, [3.5])
    return tame_constants.compute_constants(2, pairs, TEST_TRUNCATION)


@pytest.fixture(scope="session")
def constants_cache(tmp_path_factory, table_d3, table_d2):
    """Directory holding the session tables as cache files."""
    directory = tmp_path_factory.mktemp("constants")
    for entry in table_d3.entries + table_d2.entries:
        tame_constants.write_entry(entry, str(directory))
    return str(directory)
