import pytest

# criterion number -> list of (part, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, part, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    line = f"[criterion {criterion}] {part}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
    print(line)
    return passed


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        ok = all(p for _, p, _ in parts)
        failed = [name for name, p, _ in parts if not p]
        tail = f" (failing: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(
            f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  [{len(parts)} part(s)]{tail}")
