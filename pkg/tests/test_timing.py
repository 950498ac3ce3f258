import numpy as np
import pytest
from scipy.stats import truncnorm

from errors import InvalidStopError
from scenario import TimingParams, VehicleProfile
from timing import DETERMINISTIC, McConfig, ReceptionEstimator, \
    SojournModel, compute_time, data_collection_time, \
    reception_probability, sample_sojourns, upload_time


DETERMINISTIC_MC = McConfig(mode=DETERMINISTIC)


def test_system_latencies():
    timing = TimingParams()
    vehicle = VehicleProfile(id=1, trajectories=())
    assert compute_time(timing, vehicle) == pytest.approx(0.1572864, abs=1e-12)
    assert upload_time(timing, vehicle) == pytest.approx(12.808, abs=1e-12)


def test_compute_time_unit():
    timing = TimingParams(local_steps=1, batch_size=1)
    vehicle = VehicleProfile(
        id=1, trajectories=(), flops=5.0, cycles_per_sample=5.0
    )
    assert compute_time(timing, vehicle) == 1.0


def test_data_collection_time(factory, two_block_scenario):
    blocks = list(two_block_scenario.blocks) + [
        factory.block(3, (0.5, 0.5), weight=0.0)
    ]
    scenario = factory.scenario(blocks, [
        factory.vehicle(1, [factory.trajectory([1, 2, 3], sojourn=30.0)])
    ])
    assert data_collection_time(scenario, 1, 0, 1) == 0.0
    assert data_collection_time(scenario, 1, 0, 3) == 60.0
    assert data_collection_time(
        scenario, 1, 0, 3, sojourn=[1.0, 10.0, 15.5]
    ) == 25.5
    with pytest.raises(InvalidStopError):
        data_collection_time(scenario, 1, 0, 4)


def test_deterministic_reception(factory, two_block_scenario):
    blocks = list(two_block_scenario.blocks) + [
        factory.block(3, (0.5, 0.5), weight=0.0),
        factory.block(4, (0.5, 0.5), weight=0.0)
    ]
    scenario = factory.scenario(blocks, [
        factory.vehicle(1, [factory.trajectory([1, 2, 3, 4], sojourn=30.0)])
    ])
    # 60 s of collection plus 12.9652864 s of training and upload
    estimate = reception_probability(scenario, 1, 0, 3, DETERMINISTIC_MC)
    assert estimate.mean_total_s == pytest.approx(72.9652864)
    assert estimate.q_rcv == 1.0
    assert estimate.components[0] == 60.0

    # 90 s of collection exceed the 80 s deadline
    estimate = reception_probability(scenario, 1, 0, 4, DETERMINISTIC_MC)
    assert estimate.mean_total_s == pytest.approx(102.9652864)
    assert estimate.q_rcv == 0.0

    estimator = ReceptionEstimator(scenario, DETERMINISTIC_MC)
    np.testing.assert_array_equal(estimator.curve(1, 0), [1.0, 1.0, 1.0, 0.0])
    with pytest.raises(InvalidStopError):
        estimator.q_rcv(1, 0, 5)


def test_unbounded_deadline(factory, two_block_scenario):
    scenario = factory.scenario(
        two_block_scenario.blocks,
        [factory.vehicle(1, [factory.trajectory(
            [1, 2], sojourn=200.0, std=40.0, dist=factory.truncated_gaussian
        )])],
        deadline_s=1e12
    )
    for config in (DETERMINISTIC_MC, McConfig(samples=1000)):
        estimator = ReceptionEstimator(scenario, config)
        assert estimator.q_rcv(1, 0, 2) == 1.0


def test_sample_sojourns_are_truncated():
    model = SojournModel(mean_s=(10.0, 40.0), std_s=(20.0, 5.0))
    rng = np.random.default_rng(0)
    draws = sample_sojourns(model, 5000, rng)
    assert draws.shape == (5000, 2)
    assert draws.min() >= 0.0
    assert (draws <= np.array([20.0, 80.0])).all()

    model = SojournModel(mean_s=(10.0,), std_s=(0.0,), dist=DETERMINISTIC)
    np.testing.assert_array_equal(sample_sojourns(model, 3, rng), [[10.0]] * 3)


def gaussian_scenario(factory, two_block_scenario, std=10.0, slack=65.0):
    blocks = two_block_scenario.blocks
    vehicle = factory.vehicle(1, [factory.trajectory(
        [1, 2, 1, 2], sojourn=60.0, std=std, dist=factory.truncated_gaussian
    )])
    fixed = 0.1572864 + 12.808
    return factory.scenario(blocks, [vehicle], deadline_s=fixed + slack)


def test_monte_carlo_matches_truncated_gaussian(factory, two_block_scenario):
    scenario = gaussian_scenario(factory, two_block_scenario)
    estimator = ReceptionEstimator(scenario, McConfig(samples=10000, seed=3))
    expected = truncnorm.cdf(65.0, a=-6.0, b=6.0, loc=60.0, scale=10.0)
    assert estimator.q_rcv(1, 0, 2) == pytest.approx(expected, abs=0.02)
    assert estimator.q_rcv(1, 0, 1) == 1.0


def test_monte_carlo_is_monotone_and_reproducible(factory,
                                                  two_block_scenario):
    scenario = gaussian_scenario(
        factory, two_block_scenario, std=30.0, slack=130.0
    )
    config = McConfig(samples=3000, seed=9, batch_samples=1000)
    curve = ReceptionEstimator(scenario, config).curve(1, 0)
    assert (np.diff(curve) <= 0).all()
    np.testing.assert_array_equal(
        curve, ReceptionEstimator(scenario, config).curve(1, 0)
    )
    other = ReceptionEstimator(scenario, McConfig(samples=3000, seed=10))
    assert not np.array_equal(curve, other.curve(1, 0))


def test_vanishing_variance_approaches_deterministic(factory,
                                                     two_block_scenario):
    scenario = gaussian_scenario(
        factory, two_block_scenario, std=1e-6, slack=130.0
    )
    deterministic = ReceptionEstimator(scenario, DETERMINISTIC_MC).curve(1, 0)
    sampled = ReceptionEstimator(scenario, McConfig(samples=500)).curve(1, 0)
    np.testing.assert_array_equal(deterministic, [1.0, 1.0, 1.0, 0.0])
    np.testing.assert_array_equal(sampled, deterministic)


def test_estimate_components(factory, two_block_scenario):
    scenario = gaussian_scenario(factory, two_block_scenario)
    estimate = ReceptionEstimator(scenario, McConfig(samples=2000)).estimate(
        1, 0, 3
    )
    collection, computing, uploading = estimate.components
    assert collection == pytest.approx(120.0, rel=0.02)
    assert computing == pytest.approx(0.1572864)
    assert uploading == pytest.approx(12.808)
    assert estimate.mean_total_s == pytest.approx(
        collection + computing + uploading
    )
