import re

import pytest
from hypothesis import settings

settings.register_profile("repo", derandomize=True, deadline=None)
settings.register_profile("stress", max_examples=5000, deadline=None)
settings.load_profile("repo")

_RESULTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _RESULTS.append((*mark.args, rep.passed, detail))


def _order(cid):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", cid)]


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, title, ok, detail in sorted(_RESULTS, key=lambda r: _order(r[0])):
        line = f"{'PASS' if ok else 'FAIL'}  [{cid}] {title}"
        tr.write_line(f"{line}  ({detail})" if detail else line)
