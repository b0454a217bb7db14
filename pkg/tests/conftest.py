import contextlib

import pytest

_ACCEPTANCE_RESULTS = {}


@contextlib.contextmanager
def acceptance(num: int, desc: str):
    """Record a pass/fail line for one acceptance criterion."""
    try:
        yield
    except BaseException:
        _ACCEPTANCE_RESULTS[num] = (desc, False)
        raise
    _ACCEPTANCE_RESULTS[num] = (desc, True)


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test under both engines."""
    if request.param == "numba":
        from mcmcbounds.backend import HAS_NUMBA

        if not HAS_NUMBA:
            pytest.skip("numba not available")
    monkeypatch.setenv("MCMCBOUNDS_BACKEND", request.param)
    return request.param


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE_RESULTS):
        desc, ok = _ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(
            f"criterion {num} ({desc}): {'PASS' if ok else 'FAIL'}"
        )
