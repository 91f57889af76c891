"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    status = "PASS" if report.passed else "FAIL"
    ACCEPTANCE.append((props["criterion"], status, props.get("target", ""), props.get("measured", "")))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, status, target, measured in sorted(ACCEPTANCE, key=lambda r: _order(r[0])):
        line = f"{status} criterion {criterion}: {target}"
        if measured:
            line += f" | measured {measured}"
        tr.write_line(line)
    failed = sum(1 for r in ACCEPTANCE if r[1] == "FAIL")
    tr.write_line(f"{len(ACCEPTANCE) - failed}/{len(ACCEPTANCE)} acceptance criteria pass")


def _order(label):
    digits = "".join(ch for ch in label if ch.isdigit())
    return int(digits), label
