import pytest

from quaydeck.instance import (
    DistributionParams,
    GeneratorConfig,
    TruncNormal,
    generate_instance,
)

# Zero-variance distributions make every event time an exact dyadic float,
# so the hand-traced timelines below assert with ==.
DETERMINISTIC_PARAMS = DistributionParams(
    truck_speed_empty=TruncNormal(5.0, 0.0, 1.0, 10.0),
    truck_speed_loaded=TruncNormal(4.0, 0.0, 1.0, 10.0),
    qc_service=TruncNormal(100.0, 0.0, 1.0, 1000.0),
    yard_service=TruncNormal(50.0, 0.0, 1.0, 1000.0),
)


@pytest.fixture(scope="session")
def desk_instance():
    """The 4-crane/12-yard/80-task/10-truck instance used by the acceptance suite."""
    cfg = GeneratorConfig(qc_count=4, yard_count=12, task_count=80, truck_count=10)
    return generate_instance(cfg, seed=20240)


@pytest.fixture(scope="session")
def micro_instance():
    """1 crane, 1 yard, 2 loading tasks, 2 trucks, deterministic durations."""
    cfg = GeneratorConfig(
        qc_count=1, yard_count=1, task_count=2, truck_count=2,
        dist_params=DETERMINISTIC_PARAMS,
    )
    return generate_instance(cfg, seed=1)


@pytest.fixture(scope="session")
def solo_instance():
    """Same terminal as micro_instance but a single truck."""
    cfg = GeneratorConfig(
        qc_count=1, yard_count=1, task_count=2, truck_count=1,
        dist_params=DETERMINISTIC_PARAMS,
    )
    return generate_instance(cfg, seed=1)
