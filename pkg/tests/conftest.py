import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from asmlearn.graph import ModelConfig, make_rng

ROOT = Path(__file__).resolve().parents[1]

# desk-scale operating point used throughout
DESK = dict(n=1000, k=100, p=0.1)


@pytest.fixture
def rng():
    return make_rng(12345, "tests")


@pytest.fixture
def ref_config():
    return ModelConfig(n=1000, k=100, p=0.1, beta=0.1, seed=0)


@pytest.fixture(scope="session")
def mnist_sample_dir(tmp_path_factory):
    """IDX files built from the 5000-image sample shipped with mlxtend."""
    pytest.importorskip("mlxtend")
    out = tmp_path_factory.mktemp("mnist_sample")
    subprocess.run([sys.executable, str(ROOT / "scripts" / "make_mnist_subset.py"), str(out)],
                   check=True, capture_output=True)
    return out


def zscore(observed, mean, var):
    return (observed - mean) / np.sqrt(var)
