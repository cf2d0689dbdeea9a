import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import (  # noqa: E402
    chain3_bundle,
    crow_pumpkin_bundle,
    tiles_bundle,
    two_square_bundle,
)


@pytest.fixture
def two_square(tmp_path):
    return two_square_bundle(tmp_path / "two_square")


@pytest.fixture
def chain3(tmp_path):
    return chain3_bundle(tmp_path / "chain3")


@pytest.fixture
def crow_pumpkin(tmp_path):
    return crow_pumpkin_bundle(tmp_path / "crow_pumpkin")


@pytest.fixture
def tiles(tmp_path):
    return tiles_bundle(tmp_path / "tiles")
