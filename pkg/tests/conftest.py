import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
REPO_ROOT = TESTS_DIR.parent
FIXTURES = REPO_ROOT / "fixtures"

sys.path.insert(0, str(TESTS_DIR))  # makes `oracles` importable


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def tiny_dense_dir():
    d = FIXTURES / "tiny_dense"
    if not d.is_dir():
        pytest.skip("tiny_dense fixture not generated")
    return d


@pytest.fixture(scope="session")
def mini_conv_dirs():
    nested = FIXTURES / "mini_conv_nested"
    flat = FIXTURES / "mini_conv_flat"
    if not (nested.is_dir() and flat.is_dir()):
        pytest.skip("mini_conv fixtures not generated")
    return nested, flat
