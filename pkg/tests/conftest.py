import re

import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)", item.name)
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number = int(m.group(1))
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[number] = (rep.outcome == "passed", item.name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, name, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        tr.write_line(f"criterion {number:2d} {status}  {name}" + (f"  [{detail}]" if detail else ""))
