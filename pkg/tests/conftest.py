def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdict lines in the run summary."""
    try:
        from test_acceptance import VERDICT_LINES
    except ImportError:
        return
    if VERDICT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)
