"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
from collections import OrderedDict

_RESULTS = OrderedDict()


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _RESULTS.setdefault(number, {"title": title, "outcomes": [], "details": []})


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    entry = _RESULTS[mark.args[0]]
    entry["outcomes"].append(call.excinfo is None)
    entry["details"].extend(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        if not entry["outcomes"]:
            status = "NOT RUN"
        else:
            status = "PASS" if all(entry["outcomes"]) else "FAIL"
        detail = "; ".join(entry["details"])
        line = f"criterion {number:2d} {status:7s} {entry['title']}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
