import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture
def harness():
    from support import Harness

    return Harness()


@pytest.fixture
def make_harness():
    from support import Harness

    return Harness
