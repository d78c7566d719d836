import contextlib

import pytest

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


class _Criterion:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.details = []
        self.ok = True

    def check(self, cond, detail):
        self.details.append(("ok " if cond else "FAILED ") + detail)
        self.ok &= bool(cond)


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion's outcome for the summary."""

    @contextlib.contextmanager
    def run(number, title):
        c = _Criterion(number, title)
        try:
            yield c
        except BaseException as exc:
            c.ok = False
            c.details.append(f"raised {type(exc).__name__}: {exc}")
            _ACCEPTANCE[number] = (title, False, "; ".join(c.details))
            raise
        _ACCEPTANCE[number] = (title, c.ok, "; ".join(c.details))
        print(f"criterion {number}: {'PASS' if c.ok else 'FAIL'} - {title}")
        for d in c.details:
            print(f"    {d}")
        assert c.ok, "; ".join(d for d in c.details if d.startswith("FAILED"))

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, _ = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {title}")
