import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)


def rand_triplane(res=16, channels=4, extent=1.0, dtype=torch.float64, gen=None):
    from sssp.triplane import TriPlane

    kwargs = {"generator": gen} if gen is not None else {}
    mk = lambda: torch.randn(channels, res, res, dtype=dtype, **kwargs)
    return TriPlane(mk(), mk(), mk(), extent=extent)
