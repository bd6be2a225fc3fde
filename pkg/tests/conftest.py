import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tofunwrap.core import FrequencyConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def kinect():
    return FrequencyConfig.kinect_v2()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()
N_CRITERIA = 9


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's verdict, print it, then assert it."""

    def record(number: int, ok: bool, detail: str):
        results = request.config.stash.setdefault(ACCEPTANCE_KEY, {})
        results[number] = (bool(ok), detail)
        print(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, None)
    if results is None:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in results:
            ok, detail = results[n]
            terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        else:
            terminalreporter.write_line(f"CRITERION {n}: FAIL | not evaluated (test errored or was deselected)")
