import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def kernel3():
    from srwcap.green_kernel import default_kernel
    return default_kernel(3)


@pytest.fixture(scope="session")
def kernel4():
    from srwcap.green_kernel import default_kernel
    return default_kernel(4)
