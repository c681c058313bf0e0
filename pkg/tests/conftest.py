import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kscrit import _backend

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(params=sorted(_backend.available()))
def kernels(request):
    """Each importable kernel backend in turn."""
    return _backend.available()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tmp_output(tmp_path, monkeypatch):
    monkeypatch.setenv("KSCRIT_OUTPUT_ROOT", str(tmp_path / "runs"))
    return tmp_path
