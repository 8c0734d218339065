from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from swopacity.model import parse_network_spec  # noqa: E402
from swopacity.ring import ring_document  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def ring3():
    return parse_network_spec(ring_document(3))


@pytest.fixture(scope="session")
def ring3_config_path():
    return ROOT / "configs" / "ring3.json"


@pytest.fixture(scope="session")
def ring6_config_path():
    return ROOT / "configs" / "ring6.json"
