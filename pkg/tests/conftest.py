"""Shared fixtures: the converted Cora dataset and the softmax hook."""

from pathlib import Path

import pytest

from tempgate import autodiff
from tempgate.graph import load_dataset
from tempgate.planetoid import convert_planetoid

REPO_ROOT = Path(__file__).resolve().parent.parent
PLANETOID_DIR = REPO_ROOT / "data" / "planetoid"


@pytest.fixture(autouse=True, scope="session")
def concentration_hook():
    """Assert the 1/K concentration bound on every softmax in the suite."""
    autodiff.set_concentration_check(True)
    yield
    autodiff.set_concentration_check(False)


@pytest.fixture(scope="session")
def cora_path(tmp_path_factory):
    out = tmp_path_factory.mktemp("datasets") / "cora.txt"
    convert_planetoid(PLANETOID_DIR, "cora", out)
    return out


@pytest.fixture(scope="session")
def cora_dataset(cora_path):
    return load_dataset(cora_path)
