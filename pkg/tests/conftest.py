import numpy as np
import pytest

from ratlyap import hierarchy

# every certificate the hierarchy emits during the run, for the soundness criterion
PRODUCED_CERTIFICATES = []

_certify_level = hierarchy.certify_level


def _recording_certify_level(f, s, r, solver=None, verify=None):
    cert, record = _certify_level(f, s, r, solver, verify)
    if cert is not None:
        PRODUCED_CERTIFICATES.append((f, cert))
    return cert, record


hierarchy.certify_level = _recording_certify_level


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so it sees certificates produced by the rest of the suite
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    state = {}

    def record(number, title, detail=""):
        state.update(number=number, title=title, detail=detail)

    yield record
    if state:
        rep = getattr(request.node, "rep_call", None)
        passed = rep is not None and rep.passed
        ACCEPTANCE_LINES[state["number"]] = (
            f"criterion {state['number']}: {'PASS' if passed else 'FAIL'}  {state['title']}"
            + (f"  [{state['detail']}]" if state["detail"] else ""))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
