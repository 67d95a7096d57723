import time
from contextlib import contextmanager

import pytest

_RESULTS = []


class _Outcome:
    detail = ""


@pytest.fixture
def criterion():
    """Record one acceptance criterion; fails it when the runtime budget is blown."""

    @contextmanager
    def record(ident, title, limit_s=None):
        outcome = _Outcome()
        start = time.perf_counter()
        try:
            yield outcome
            elapsed = time.perf_counter() - start
            if limit_s is not None and elapsed > limit_s:
                raise AssertionError(f"runtime {elapsed:.1f}s exceeds {limit_s}s")
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            lines = [ln.strip() for ln in str(exc).splitlines() if ln.strip()]
            _RESULTS.append((ident, title, False, lines[0] if lines else type(exc).__name__, elapsed))
            raise
        _RESULTS.append((ident, title, True, outcome.detail, elapsed))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for ident, title, ok, detail, elapsed in sorted(_RESULTS, key=lambda r: int(r[0][1:])):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {ident} {title} ({elapsed:.1f}s) {detail}")
