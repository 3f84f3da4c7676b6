import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def corpus_paths():
    return sorted((FIXTURES / "corpus").glob("*.krn"))


@pytest.fixture
def minimal_kern():
    return "**kern\t**harte\n*clefG2\t*clefG2\n*k[f#]\t*k[f#]\n*M4/4\t*M4/4\n4a\tD:min7\n4b\t.\n==\t==\n*-\t*-\n"
