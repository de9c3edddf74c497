"""Shared test plumbing: the acceptance-criterion verdict ledger."""

_VERDICTS: list[tuple[int, str]] = []


def record_verdict(num: int, label: str, ok: bool, detail: str = "") -> None:
    """Append one PASS/FAIL line; the terminal summary prints them in order."""
    status = "PASS" if ok else "FAIL"
    line = f"{status} criterion {num:2d}: {label}"
    if detail:
        line += f"  [{detail}]"
    _VERDICTS.append((num, line))
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
