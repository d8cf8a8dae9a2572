import numpy as np
import pytest

from cqamimo.channel import ChannelSet


def cn(rng, shape, var=1.0):
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_channels(rng):
    def make(n_tx=16, n_rx=(2, 2, 2, 2)):
        return ChannelSet.from_matrix(cn(rng, (sum(n_rx), n_tx)), n_rx)
    return make


_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA[props["criterion"]] = ("PASS" if report.passed else "FAIL", props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2}: {status}  {detail}")
