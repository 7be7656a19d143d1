import pytest
from hypothesis import settings, HealthCheck

from ionsim import harness

settings.register_profile(
    "ci",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def reference_config():
    return harness.load_config()
