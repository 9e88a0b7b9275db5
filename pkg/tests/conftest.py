import numpy as np
import pytest

from lcsc.filippov import Perturbation
from lcsc.integrator import TimingRegion, find_limit_cycle
from lcsc.models import TIMING_RAYS, coupled_single, planar_model, stick_slip_model
from lcsc.sensitivity import iprc

ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store one acceptance line; sub-checks of a criterion are combined."""
    prev = ACCEPTANCE.get(criterion)
    if prev is None:
        ACCEPTANCE[criterion] = (ok, [detail])
    else:
        ACCEPTANCE[criterion] = (prev[0] and ok, prev[1] + [detail])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, details = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))


@pytest.fixture(scope="session")
def planar():
    return planar_model(0.2)


@pytest.fixture(scope="session")
def planar_lc(planar):
    return find_limit_cycle(planar, [0.5, 0.0], ("liftoff", 0))


@pytest.fixture(scope="session")
def planar_z(planar_lc):
    return iprc(planar_lc)


@pytest.fixture(scope="session")
def planar_timing():
    return planar_model(0.2, timing=TIMING_RAYS)


@pytest.fixture(scope="session")
def planar_timing_lc(planar_timing):
    return find_limit_cycle(planar_timing, [0.5, 0.0], ("timing", 0))


@pytest.fixture(scope="session")
def planar_regions():
    return [
        TimingRegion("I", ("timing", 0), ("timing", 1)),
        TimingRegion("II", ("timing", 1), ("timing", 0)),
    ]


@pytest.fixture(scope="session")
def region_one():
    return Perturbation({"alpha": 1.0, "omega": -1.0}, frozenset({1}))


@pytest.fixture(scope="session")
def stickslip():
    return stick_slip_model()


@pytest.fixture(scope="session")
def stickslip_lc(stickslip):
    return find_limit_cycle(stickslip, [1.4127, 0.0829], ("liftoff", 0))


@pytest.fixture(scope="session")
def stickslip_z(stickslip_lc):
    return iprc(stickslip_lc)


@pytest.fixture(scope="session")
def stickslip_regions():
    return [
        TimingRegion("stick", ("landing", 0), ("liftoff", 0)),
        TimingRegion("slip", ("liftoff", 0), ("landing", 0)),
    ]


@pytest.fixture(scope="session")
def single():
    return coupled_single()


@pytest.fixture(scope="session")
def single_lc(single):
    return find_limit_cycle(single, [0.5, 0.0], ("liftoff", 0))


@pytest.fixture(scope="session")
def single_z(single_lc):
    return iprc(single_lc)


@pytest.fixture(scope="session")
def interaction(single_lc, single_z):
    from lcsc.models import COUPLED_DEFAULTS
    from lcsc.phase import h_function, spring_coupling

    return h_function(single_lc, single_z, spring_coupling(COUPLED_DEFAULTS))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
