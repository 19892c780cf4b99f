"""Shared pytest plumbing: the acceptance suite's per-criterion summary."""

criterion_lines: list[str] = []


def record_criterion(line: str):
    criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(criterion_lines):
            terminalreporter.write_line(line)
