"""Shared pytest configuration.

Acceptance tests carry ``@pytest.mark.acceptance(number, title)``; after the
run a one-line PASS/FAIL verdict per criterion is printed together with the
measured quantities the test recorded through ``record_property("detail", ...)``.
"""

import pytest

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _VERDICTS[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        title, ok, detail = _VERDICTS[number]
        line = f"ACCEPTANCE criterion {number} ({title}): {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
