import pytest

from poolshrink.risksim import simulate_risk, table1_preset

ACCEPTANCE_REPLICATIONS = 100_000
ACCEPTANCE_SEED = 2024


@pytest.fixture(scope="session")
def table1_reports():
    """The full benchmark run shared by the acceptance criteria: label ->
    RiskReport at 10^5 replications."""
    jobs = table1_preset(replications=ACCEPTANCE_REPLICATIONS, seed=ACCEPTANCE_SEED)
    return {label: simulate_risk(plan) for label, plan in jobs}
