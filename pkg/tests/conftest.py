import numpy as np
import pytest

_VERDICTS = {}


def _record(number, part, ok, detail=""):
    _VERDICTS.setdefault(number, []).append((bool(ok), part + (f" [{detail}]" if detail else "")))


@pytest.fixture
def verdict():
    """Record one checked part of an acceptance criterion, then assert it."""

    def record(number, part, ok, detail=""):
        _record(number, part, ok, detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {part} {detail}")
        assert ok, f"criterion {number}: {part} {detail}"

    return record


def pytest_runtest_makereport(item, call):
    # a test that errors before recording still counts against its criterion
    num = getattr(item.function, "criterion", None)
    if num is not None and call.when == "call" and call.excinfo is not None:
        if not call.excinfo.errisinstance(AssertionError):
            _record(num, f"{item.name} raised {call.excinfo.typename}", False)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        parts = _VERDICTS[k]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{status} criterion {k:2d}: " + "; ".join(p for _, p in parts))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
