from dataclasses import replace

import pytest

from enose import csvio
from enose.simulator import SimScenario, synthesize


def write_acquisition(path, scenario, prefix_side=True):
    """Interleaved acquisition CSV for trial 0 of ``scenario``, both sides."""
    trial = synthesize(scenario)[0]
    chans = []
    for side in ("left", "right"):
        for pair, c in trial.side(side).items():
            chans.append((f"{side}/{pair}" if prefix_side else c.channel_id, c))
    with csvio.open_out(path) as fh:
        w = csvio.writer(fh)
        w.writerow(csvio.ACQUISITION)
        n = len(chans[0][1].timestamps)
        cols = [(cid, c.timestamps.tolist(), c.codes.tolist(), c.gains.tolist()) for cid, c in chans]
        for i in range(n):
            for cid, ts, codes, gains in cols:
                w.writerow((repr(ts[i]), cid, codes[i], gains[i], 24))
    return trial


@pytest.fixture(scope="session")
def acq_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("acq") / "acq.csv"
    write_acquisition(path, replace(SimScenario(), duration=6.0))
    return path


_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[n] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[n]
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
