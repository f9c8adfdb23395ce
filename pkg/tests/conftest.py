import numpy as np
import pandas as pd
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return p

    return _write


def make_panel(values, start="2023-01-01 00:00", stations=None):
    from poolbench.panel import PanelSeries

    values = np.atleast_2d(np.asarray(values, dtype=float))
    stations = stations or tuple(f"s{i}" for i in range(len(values)))
    return PanelSeries(tuple(stations), pd.Timestamp(start), values)


# -- acceptance reporting -------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {status}: {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
