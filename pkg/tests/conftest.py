import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import Scenario  # noqa: E402


@pytest.fixture
def scenario() -> Scenario:
    return Scenario()
