import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent


def data_dir() -> Path:
    return Path(os.environ.get("NLRELU_DATA_DIR", ROOT / "data"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
