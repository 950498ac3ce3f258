from types import SimpleNamespace

import pytest

from cli import create_app
from divergence import ClassDistribution
from optimizer import OptimizerConfig
from scenario import GeneratorSpec, LearningParams, Scenario, StreetBlock, \
    TimingParams, Trajectory, VehicleProfile, generate_synthetic
from timing import DETERMINISTIC, SojournModel, TRUNCATED_GAUSSIAN


def make_block(id, probs, avg_objects=100.0, weight=1.0):
    return StreetBlock(
        id=id, avg_objects=avg_objects,
        class_dist=ClassDistribution(tuple(float(p) for p in probs)),
        weight=weight
    )


def make_trajectory(blocks, prob=1.0, collected=1, sojourn=1.0, std=0.0,
                    dist=DETERMINISTIC):
    if isinstance(sojourn, (int, float)):
        sojourn = [float(sojourn)] * len(blocks)
    if isinstance(std, (int, float)):
        std = [float(std)] * len(blocks)
    return Trajectory(
        blocks=tuple(blocks), prob=prob, collected_count=collected,
        sojourn=SojournModel(
            mean_s=tuple(sojourn), std_s=tuple(std), dist=dist
        )
    )


def make_vehicle(id, trajectories, **kwargs):
    return VehicleProfile(id=id, trajectories=tuple(trajectories), **kwargs)


def make_scenario(blocks, vehicles, budget=1, local_steps=2,
                  deadline_s=80.0, lr=0.001, lipschitz=0.01):
    return Scenario(
        blocks=tuple(blocks),
        vehicles=tuple(vehicles),
        timing=TimingParams(deadline_s=deadline_s, local_steps=local_steps),
        learning=LearningParams(lr=lr, lipschitz=lipschitz),
        budget=budget
    )


def synthetic(seed, blocks=8, vehicles=8, classes=3, max_trajectories=2,
              max_blocks=4, budget=3, **kwargs):
    return generate_synthetic(GeneratorSpec(
        blocks=blocks, vehicles=vehicles, classes=classes,
        max_trajectories=max_trajectories, max_blocks=max_blocks,
        budget=budget, seed=seed, **kwargs
    ))


class FixedReception:
    """Reception estimator returning fixed probabilities per trajectory."""

    def __init__(self, probs):
        """Constructor

        :param dict probs: (vehicle ID, trajectory index) -> q_rcv
        """
        self.probs = probs

    def q_rcv(self, vehicle_id, m, g):
        return self.probs[(vehicle_id, m)]


@pytest.fixture
def factory():
    return SimpleNamespace(
        block=make_block, trajectory=make_trajectory, vehicle=make_vehicle,
        scenario=make_scenario, synthetic=synthetic,
        fixed_reception=FixedReception, deterministic=DETERMINISTIC,
        truncated_gaussian=TRUNCATED_GAUSSIAN
    )


@pytest.fixture
def two_block_scenario():
    """Blocks (1, 0) and (0, 1) with Q = (100, 300) and equal weights, one
    vehicle per block.
    """
    blocks = [
        make_block(1, (1.0, 0.0), avg_objects=100.0, weight=0.5),
        make_block(2, (0.0, 1.0), avg_objects=300.0, weight=0.5)
    ]
    vehicles = [
        make_vehicle(1, [make_trajectory([1])]),
        make_vehicle(2, [make_trajectory([2])])
    ]
    return make_scenario(blocks, vehicles, budget=1)


@pytest.fixture
def fast_config():
    return OptimizerConfig(mc_samples=2000)


@pytest.fixture
def deterministic_config():
    return OptimizerConfig(timing_mode=DETERMINISTIC)


@pytest.fixture
def app(tmp_path):
    return create_app({
        'CONFIG_PATH': str(tmp_path / 'config'),
        'TENANT': 'default',
        'SENSE4FL_OVERRIDES': {'mc_samples': 1000}
    })


@pytest.fixture
def runner(app):
    return app.test_cli_runner()
