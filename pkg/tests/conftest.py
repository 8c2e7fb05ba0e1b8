import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from goalforge.lang import normalize_schema


@pytest.fixture
def tank_schema():
    return normalize_schema({"level": (0.0, 1.0), "setpoint": (0.05, 0.95)})


@pytest.fixture
def plate_schema():
    return normalize_schema(
        {
            "x": (-0.1125, 0.1125),
            "y": (-0.1125, 0.1125),
            "vx": (-0.5, 0.5),
            "vy": (-0.5, 0.5),
        }
    )


@pytest.fixture
def xy_schema():
    return normalize_schema({"x": (0.0, 10.0), "y": (-5.0, 5.0)})
