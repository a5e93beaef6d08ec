import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in getattr(module, "CRITERIA"):
        if key in results:
            ok, detail = results[key]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}")
