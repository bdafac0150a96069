import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from p2pforge.signature import (  # noqa: E402
    Bootstrap,
    BootstrapKind,
    CncStyle,
    Membership,
    standard_signature,
    to_document,
)
from p2pforge.net import Endpoint  # noqa: E402


@pytest.fixture
def push_sig():
    return standard_signature()


@pytest.fixture
def pull_sig():
    return standard_signature(cnc_style=CncStyle.PULL)


@pytest.fixture
def sig_doc(push_sig):
    return to_document(push_sig)


@pytest.fixture
def bootstrap_sig():
    return standard_signature(
        "botonly-pull",
        membership=Membership.BOTS_ONLY,
        cnc_style=CncStyle.PULL,
        bootstrap=Bootstrap(BootstrapKind.BOOTSTRAP_SERVERS, (Endpoint.parse("10.1.2.3:4000"),)),
    )


_CRITERIA: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA.setdefault(mark.args[0], []).append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok = all(o == "passed" for o in _CRITERIA[n])
        terminalreporter.write_line(f"ACCEPTANCE criterion {n}: {'PASS' if ok else 'FAIL'}")
