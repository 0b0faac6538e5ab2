import pytest

from hoguard.scenario import CORRECTED_A3, MISCONFIGURED_A3, reference_scenario
from hoguard.sim import run_scenario


@pytest.fixture(scope="session")
def reference_spec():
    return reference_scenario(seed=42)


@pytest.fixture(scope="session")
def misconfigured_output(reference_spec):
    overrides = {c.cell_id: MISCONFIGURED_A3 for c in reference_spec.cells}
    return run_scenario(reference_spec, a3_overrides=overrides)


@pytest.fixture(scope="session")
def corrected_output(reference_spec):
    overrides = {c.cell_id: CORRECTED_A3 for c in reference_spec.cells}
    return run_scenario(reference_spec, a3_overrides=overrides)
