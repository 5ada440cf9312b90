import pytest

from randlsv.system import SystemParams


@pytest.fixture
def params():
    return SystemParams(0.5, 0.7, 0.6)


def unchecked_params(alpha, beta, p1):
    """SystemParams that skips validation, for negative controls only."""
    p = object.__new__(SystemParams)
    for k, v in dict(alpha=alpha, beta=beta, p1=p1, strict_regime=False).items():
        object.__setattr__(p, k, v)
    return p
