import pytest

_ACCEPTANCE = {}


@pytest.fixture
def record():
    """Record an acceptance verdict: ``record(n, ok, detail)``."""

    def _record(n, ok, detail=""):
        _ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
