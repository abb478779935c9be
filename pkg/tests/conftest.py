"""Repeats the acceptance verdict lines at the end of the pytest run."""


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            lines += [v for k, v in rep.user_properties if k == "acceptance"]
            if outcome == "failed" and not any(k == "acceptance" for k, _ in rep.user_properties) \
                    and "test_acceptance" in rep.nodeid:
                lines.append(f"ACCEPTANCE {rep.nodeid.split('::')[-1]} FAIL  (raised before a verdict)")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1][1:]) if s.split()[1][1:].isdigit() else 99):
            terminalreporter.write_line(line)
