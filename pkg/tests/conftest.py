import io
import itertools
import tempfile
from pathlib import Path

import numpy as np
import pytest

from database import RunDatabase
from hypergraph import Hypergraph, parse_hyperedges
from logger import set_global_logger
from params import ModelParams, Variant
from settings import create_default_settings


@pytest.fixture(autouse=True)
def reset_global_logger():
    """Library messages go to the hypermeso logger in every test"""
    set_global_logger(None)
    yield
    set_global_logger(None)


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files"""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def temp_db_path(temp_dir):
    """Create a temporary database path"""
    return temp_dir / "test.db"


@pytest.fixture
def db(temp_db_path):
    """Create a temporary test database instance"""
    db = RunDatabase(str(temp_db_path))
    yield db
    db.remove_database()


@pytest.fixture
def settings_path(temp_dir):
    """Settings ini pointing every output inside the temporary directory"""
    path = temp_dir / "settings.ini"
    settings = create_default_settings(path)
    settings.setValue("output_directory", str(temp_dir / "runs"))
    settings.setValue("database_path", str(temp_dir / "runs.db"))
    settings.sync()
    return path


@pytest.fixture
def small_hypergraph():
    """Three occurrences on four nodes, one of them repeated"""
    return parse_hyperedges(io.StringIO("1 2 3\n1 2 3\n2 4\n"))


def make_params(rng, n_nodes, n_classes, n_communities, max_order, variant):
    """Random positive parameters with the identity block in W"""
    theta = rng.random((n_nodes, n_classes)) + 0.05
    w = np.zeros((n_classes, n_communities))
    w[:, :n_classes] = np.eye(n_classes)
    n_free = n_communities - n_classes
    if n_free:
        w[:, n_classes:] = rng.dirichlet(np.ones(n_classes), size=n_free).T + 0.01
    gamma = rng.random((max_order - 1, n_communities)) + 0.1
    return ModelParams(Variant(variant), theta, w, gamma)


def make_hypergraph(rng, n_nodes, max_order, n_edges=12, max_count=3):
    """Random hypergraph with edges of every order in [2, max_order]"""
    hypergraph = Hypergraph(n_nodes, max_order)
    for d in range(2, max_order + 1):
        candidates = list(itertools.combinations(range(n_nodes), d))
        picked = rng.choice(len(candidates), size=min(n_edges, len(candidates)), replace=False)
        for index in picked:
            hypergraph.add(candidates[index], int(rng.integers(1, max_count + 1)))
    return hypergraph


@pytest.fixture
def random_params():
    """Factory for random model parameters"""
    return make_params


@pytest.fixture
def random_hypergraph():
    """Factory for small random hypergraphs"""
    return make_hypergraph
