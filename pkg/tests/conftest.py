import re

CRITERION = re.compile(r"test_criterion_(\d+)_")

# criterion number -> (outcome, one-line summary)
_results = {}


def pytest_runtest_logreport(report):
    m = CRITERION.search(report.nodeid)
    if not m:
        return
    # a setup error (e.g. missing dataset) counts as the criterion's outcome too
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[int(m.group(1))] = (report.outcome, dict(report.user_properties).get("summary", ""))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        outcome, summary = _results[num]
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"criterion {num}: {status}  {summary}")
