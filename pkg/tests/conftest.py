import numpy as np
import pytest

from uavrisk.grid import GridSpec
from uavrisk.planning import validate_path
from uavrisk.risk import RiskMap, build_risk_map
from uavrisk.scenario import ScenarioGenConfig, generate_scenario

CORNER_OD = ((0, 0, 0), (59, 59, 3))


@pytest.fixture(scope="session")
def default_scenario():
    return generate_scenario(ScenarioGenConfig())


@pytest.fixture(scope="session")
def default_map(default_scenario):
    return build_risk_map(default_scenario)


def random_map(seed: int, shape=(5, 5, 2), p_occ=0.2, od=((0, 0, 0), None)) -> RiskMap:
    """Small random map with positive costs; origin/destination kept free."""
    rng = np.random.default_rng(seed)
    spec = GridSpec(*shape)
    costs = rng.uniform(0.01, 1.0, spec.shape)
    occ = rng.random(spec.shape) < p_occ
    o = od[0]
    d = od[1] or tuple(n - 1 for n in shape)
    occ[o] = occ[d] = False
    return RiskMap.from_costs(spec, costs, occ)


def assert_valid(path, risk_map):
    v = validate_path(path.vertices, risk_map.spec, risk_map.occupied)
    assert v is None, v


# Every path produced anywhere in the suite is checked against the grid
# constraints; the acceptance suite and the session summary report the tally.
PATH_AUDIT = {"checked": 0, "violations": []}


@pytest.fixture(scope="session", autouse=True)
def _audit_paths():
    import uavrisk.eda as eda_mod
    import uavrisk.planning as planning_mod

    original = planning_mod.search

    def audited(risk_map, *args, **kwargs):
        path = original(risk_map, *args, **kwargs)
        PATH_AUDIT["checked"] += 1
        v = validate_path(path.vertices, risk_map.spec, risk_map.occupied)
        if v is not None:
            PATH_AUDIT["violations"].append(v)
        return path

    planning_mod.search = audited
    eda_mod.search = audited
    yield
    planning_mod.search = original
    eda_mod.search = original


# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other collected test")


def pytest_collection_modifyitems(session, config, items):
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_sessionfinish(session, exitstatus):
    n, bad = PATH_AUDIT["checked"], PATH_AUDIT["violations"]
    print(f"\npath audit: {n} planner outputs checked, {len(bad)} constraint violations")
    if bad:
        session.exitstatus = 1
