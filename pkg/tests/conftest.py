import pytest

from anjam.channels import SystemParams, Topology, db_to_linear, dbm_to_watts
from anjam.energy_chain import EnergyStorageSpec

ACCEPTANCE_LINES: list[str] = []


def make_params(ps_dbm=20.0, pj_dbm=0.0, topo=None, **kw) -> SystemParams:
    """Default deployment with the given powers; extra keywords override fields."""
    base = dict(
        p_s=dbm_to_watts(ps_dbm),
        p_j=dbm_to_watts(pj_dbm),
        p_c=1e-4,
        sigma2_d=dbm_to_watts(-80.0),
        sigma2_e=dbm_to_watts(-80.0),
        rho=1.0,
        r_s=1.0,
        n_t=4,
        n_r=4,
        k_rician=db_to_linear(5.0),
    )
    base.update(kw)
    return SystemParams.from_topology(topo or Topology(), **base)


def make_storage(params, c1=0.02, c2=0.01, levels=100) -> EnergyStorageSpec:
    return EnergyStorageSpec.for_params(params, c1, c2, levels)


@pytest.fixture
def params():
    return make_params()


@pytest.fixture
def storage(params):
    return make_storage(params)


@pytest.fixture
def record_criterion():
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
