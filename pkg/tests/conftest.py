"""
Pytest configuration and fixtures
"""

import math
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Make the SDK importable without installing the package.
ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))
SDK_PATH = ROOT / "sdk"
sys.path.insert(0, str(SDK_PATH))

# Keep test runs independent of a developer's .env
os.environ.pop("SHORTPULSE_OUTPUT_DIR", None)
os.environ.pop("SHORTPULSE_THREADS", None)

from shortpulse.spectral_core import FourierGrid  # noqa: E402


@pytest.fixture
def periodic_grid():
    """Return the 2*pi grid with 32 nodes"""
    return FourierGrid(2 * math.pi, 32)


@pytest.fixture
def rng():
    """Seeded random generator"""
    return np.random.default_rng(1234)


@pytest.fixture
def scenario_file(tmp_path):
    """Write a small scenario file and return its path"""
    def write(text: str) -> Path:
        path = tmp_path / "scenario.yaml"
        path.write_text(text, encoding="utf-8")
        return path
    return write


def pytest_configure(config):
    """Configure pytest"""
    config.addinivalue_line("markers", "integration: mark test as an integration test")
    config.addinivalue_line("markers", "slow: mark test as slow running")
