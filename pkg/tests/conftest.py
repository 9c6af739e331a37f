def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for res in sorted(RESULTS, key=lambda r: r.number):
        terminalreporter.write_line(res.line())
    n_pass = sum(r.passed for r in RESULTS)
    terminalreporter.write_line(f"{n_pass}/{len(RESULTS)} criteria passed")
