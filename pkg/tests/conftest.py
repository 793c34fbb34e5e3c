import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synover.rng import RngStream  # noqa: E402

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def acceptance_record():
    def record(name: str, passed: bool, detail: str):
        _ACCEPTANCE[name] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0].lstrip("C").rstrip("ab"))):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
