import pytest
from hypothesis import HealthCheck, settings

from crcsim.engine import RunConfig, TopologySpec, WorkloadSpec, build_scenario

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_config(seed=0, n=8, contents=60, horizon=80, duration=20, policy="CRC",
                 capacity=(1500.0, 2000.0), rate_scale=2.0) -> RunConfig:
    return RunConfig(
        topology=TopologySpec(n=n, capacity_range=capacity),
        workload=WorkloadSpec(contents=contents, max_duration=duration, horizon=horizon, rate_scale=rate_scale),
        policy=policy, seed=seed, strict=True)


@pytest.fixture(scope="session")
def small_scenario():
    return build_scenario(small_config())


@pytest.fixture(scope="session")
def tight_scenario():
    """Caches hold only a handful of contents, so admission and replacement
    decisions actually bind."""
    return build_scenario(small_config(seed=3, n=10, contents=120, capacity=(500.0, 700.0)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
