import numpy as np
import pytest
from hypothesis import settings

from cen_meta.analytic import match_fixed_range
from cen_meta.model import Fixed, default_config

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


@pytest.fixture(scope="session")
def flex_cfg():
    return default_config()


@pytest.fixture(scope="session")
def fixed_cfg():
    c = default_config()
    return c.replace(scheme=Fixed(match_fixed_range(0.8, c.lambda_bs, c.xi)))


# acceptance results, filled by tests/test_acceptance.py and printed at the end of the run
ACCEPTANCE = {}


def record(criterion, name, ok, detail):
    ACCEPTANCE[(criterion, name)] = (ok, detail)
    print(f"criterion {criterion} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (crit, name), (ok, detail) in sorted(ACCEPTANCE.items()):
        terminalreporter.write_line(
            f"criterion {crit:>2} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})")
