import math

import numpy as np
import pandas as pd
import pytest

from errors import EmptyDatasetError
from flsim import CSV_COLUMNS, Realization, SimConfig, Simulator, ToyModel, \
    aggregate, evaluate, load_model, local_sgd, logs_to_frame, \
    loss_and_gradient, realize_round, run_training, save_model, summarize, \
    synthesize_block_data
from objective import Decision
from optimizer import OptimizerConfig
from timing import DETERMINISTIC, McConfig, ReceptionEstimator


SMALL = SimConfig(
    rounds=3, feature_dim=4, pool_size=300, eval_size=300, central_size=300
)
FAST = OptimizerConfig(mc_samples=500)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(rounds=-1)
    with pytest.raises(ValueError):
        SimConfig(availability=0.0)
    with pytest.raises(ValueError):
        SimConfig(pool_size=0)


def test_block_data_follows_class_distributions(factory, two_block_scenario):
    config = SimConfig(feature_dim=4, pool_size=2000, eval_size=4000)
    data = synthesize_block_data(two_block_scenario, config, seed=1)
    assert set(np.unique(data.pools[1][1])) == {0}
    assert set(np.unique(data.pools[2][1])) == {1}
    assert data.pools[1][0].shape == (2000, 4)

    # test set follows the target (0.5, 0.5)
    labels = data.test[1]
    tolerance = 4 * math.sqrt(0.25 / len(labels))
    assert np.mean(labels == 0) == pytest.approx(0.5, abs=tolerance)

    again = synthesize_block_data(two_block_scenario, config, seed=1)
    np.testing.assert_array_equal(again.test[0], data.test[0])


def random_problem(rng, classes=3, dim=5, size=20):
    model = ToyModel(rng.normal(size=(classes, dim + 1)))
    features = rng.normal(size=(size, dim))
    labels = rng.integers(classes, size=size)
    return model, features, labels


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        model, features, labels = random_problem(rng)
        _, gradient = loss_and_gradient(model, features, labels)
        direction = rng.normal(size=model.weights.shape)
        h = 1e-6
        plus, _ = loss_and_gradient(
            ToyModel(model.weights + h * direction), features, labels
        )
        minus, _ = loss_and_gradient(
            ToyModel(model.weights - h * direction), features, labels
        )
        numeric = (plus - minus) / (2 * h)
        analytic = float(np.sum(gradient * direction))
        assert abs(numeric - analytic) <= 1e-5 * max(1.0, abs(analytic))


def test_local_sgd():
    rng = np.random.default_rng(1)
    model, features, labels = random_problem(rng)

    unchanged = local_sgd(model, features, labels, 3, 0.0, 8, seed=0)
    np.testing.assert_array_equal(unchanged.weights, model.weights)

    one = local_sgd(model, features[:1], labels[:1], 1, 0.1, 8, seed=0)
    _, gradient = loss_and_gradient(model, features[:1], labels[:1])
    np.testing.assert_allclose(
        one.weights, model.weights - 0.1 * gradient, atol=1e-15
    )

    first = local_sgd(model, features, labels, 5, 0.1, 4, seed=2)
    second = local_sgd(model, features, labels, 5, 0.1, 4, seed=2)
    np.testing.assert_array_equal(first.weights, second.weights)
    # input model is not modified
    assert not np.array_equal(first.weights, model.weights)

    with pytest.raises(EmptyDatasetError):
        local_sgd(model, features[:0], labels[:0], 1, 0.1, 4, seed=0)


def test_evaluate():
    model = ToyModel(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    features = np.array([[2.0], [-2.0]])
    accuracy, loss = evaluate(model, features, np.array([0, 1]))
    assert accuracy == 1.0
    assert loss == pytest.approx(math.log(1 + math.exp(-4.0)))


def test_realize_round_extremes(factory, two_block_scenario):
    scenario = factory.scenario(two_block_scenario.blocks, [
        factory.vehicle(1, [factory.trajectory([1])]),
        factory.vehicle(2, [factory.trajectory([2, 1], sojourn=100.0)])
    ], budget=2)
    estimator = ReceptionEstimator(scenario, McConfig(mode=DETERMINISTIC))
    decision = Decision(selected=(1, 2), stops={1: (1,), 2: (2,)})
    rng = np.random.default_rng(3)
    for _ in range(100):
        outcomes = realize_round(scenario, decision, rng, estimator)
        assert outcomes[1].uploaded
        assert not outcomes[2].uploaded
        assert outcomes[2].stop == 2
        assert outcomes[1].features is None


def test_realize_round_frequencies(factory, two_block_scenario):
    scenario = factory.scenario(two_block_scenario.blocks, [
        factory.vehicle(1, [
            factory.trajectory([1], prob=0.3),
            factory.trajectory([1, 2], prob=0.7, sojourn=60.0, std=20.0,
                               dist=factory.truncated_gaussian)
        ])
    ], deadline_s=80.0)
    estimator = ReceptionEstimator(scenario, McConfig(samples=5000))
    decision = Decision(selected=(1,), stops={1: (1, 2)})
    rng = np.random.default_rng(4)
    draws = 10000
    trajectories = 0
    uploads = 0
    for _ in range(draws):
        outcome = realize_round(scenario, decision, rng, estimator)[1]
        trajectories += outcome.trajectory
        uploads += outcome.uploaded
    q_long = estimator.q_rcv(1, 1, 2)
    expected = 0.3 + 0.7 * q_long
    assert 0.0 < q_long < 1.0
    assert trajectories / draws == pytest.approx(
        0.7, abs=4 * math.sqrt(0.21 / draws)
    )
    assert uploads / draws == pytest.approx(
        expected, abs=4 * math.sqrt(expected * (1 - expected) / draws)
    )


def test_realize_round_collects_samples(factory, two_block_scenario):
    data = synthesize_block_data(two_block_scenario, SMALL, seed=0)
    decision = Decision(selected=(1, 2), stops={1: (1,), 2: (1,)})
    outcomes = realize_round(
        two_block_scenario, decision, 0, data=data
    )
    assert set(outcomes[1].labels) <= {0}
    assert set(outcomes[2].labels) <= {1}
    assert len(outcomes[2].labels) > len(outcomes[1].labels)


def uploaded(*ids):
    return {v: Realization(0, 1, True) for v in ids}


def test_aggregate(two_block_scenario):
    scenario = two_block_scenario
    decision = Decision(selected=(1, 2), stops={1: (1,), 2: (1,)})
    a = ToyModel(np.ones((2, 3)))
    b = ToyModel(3 * np.ones((2, 3)))

    same = aggregate(scenario, {1: a, 2: a}, decision, uploaded(1, 2))
    np.testing.assert_allclose(same.weights, a.weights)

    mean = aggregate(scenario, {1: a, 2: b}, decision, uploaded(1, 2))
    np.testing.assert_allclose(mean.weights, 2 * np.ones((2, 3)))

    outcomes = uploaded(1, 2)
    outcomes[2] = Realization(0, 1, False)
    single = aggregate(scenario, {1: a, 2: b}, decision, outcomes)
    np.testing.assert_allclose(single.weights, a.weights)

    outcomes[1] = Realization(0, 1, False)
    assert aggregate(scenario, {1: a, 2: b}, decision, outcomes) is None


def test_run_training(factory):
    scenario = factory.synthetic(seed=3, blocks=6, vehicles=6, budget=2)
    logs = run_training(scenario, 'sense4fl', SMALL, FAST, seed=1)
    assert [log.round for log in logs] == [0, 1, 2]
    for log in logs:
        assert log.strategy == 'sense4fl'
        assert 0 <= log.uploads <= 2
        assert 0.0 <= log.test_acc <= 1.0
        assert set(log.trajectories) == set(log.uploaded)
        assert len(log.trajectories) == 2

    again = run_training(scenario, 'sense4fl', SMALL, FAST, seed=1)
    assert logs_to_frame(again).equals(logs_to_frame(logs))

    assert run_training(
        scenario, 'random', SimConfig(rounds=0), FAST
    ) == []


def test_centralized_training(factory):
    scenario = factory.synthetic(seed=3, blocks=6, vehicles=6, budget=2)
    config = SimConfig(
        rounds=20, feature_dim=4, pool_size=300, eval_size=500,
        central_size=1000
    )
    logs = run_training(scenario, 'centralized', config, FAST)
    assert all(log.omega == 0.0 and log.uploads == 0 for log in logs)
    assert logs[-1].test_loss < logs[0].test_loss


def test_round_statistics_strategies(factory):
    scenario = factory.synthetic(seed=3, blocks=6, vehicles=6, budget=2)
    for name in ('gradient_based', 'power_of_choice'):
        logs = run_training(scenario, name, SMALL, FAST)
        assert len(logs) == 3
        assert set(logs[0].gradient_norms) == set(scenario.vehicle_ids)


def test_availability_churn(factory):
    scenario = factory.synthetic(seed=3, blocks=6, vehicles=6, budget=3)
    config = SimConfig(
        rounds=4, feature_dim=4, pool_size=300, eval_size=300,
        central_size=300, availability=0.2
    )
    simulator = Simulator(scenario, 'random', config, FAST)
    rng = np.random.default_rng(0)
    for _ in range(20):
        available = simulator.available(rng)
        assert len(available.vehicles) >= 3
        assert available.budget == 3
    logs, _ = simulator.run(seed=2)
    assert all(len(log.trajectories) == 3 for log in logs)


def test_initial_model(factory, tmp_path):
    scenario = factory.synthetic(seed=3, blocks=6, vehicles=6, budget=2)
    config = SimConfig(rounds=0, feature_dim=4)
    simulator = Simulator(scenario, 'random', config, FAST)
    start = ToyModel(np.full((scenario.num_classes, 5), 0.5))
    _, model = simulator.run(seed=0, initial_model=start)
    assert model is start

    path = str(tmp_path / 'model.npy')
    save_model(start, path)
    np.testing.assert_array_equal(load_model(path).weights, start.weights)

    with pytest.raises(ValueError):
        simulator.run(initial_model=ToyModel(np.zeros((2, 2))))


def test_frames_and_summary(factory):
    scenario = factory.synthetic(seed=3, blocks=6, vehicles=6, budget=2)
    logs = run_training(scenario, 'random', SMALL, FAST, seed=0)
    logs += run_training(scenario, 'random', SMALL, FAST, seed=1)
    logs += run_training(scenario, 'centralized', SMALL, FAST, seed=0)
    frame = logs_to_frame(logs)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 9

    summary = summarize(frame)
    assert list(summary.columns) == ['strategy', 'final_acc', 'omega',
                                     'uploads']
    assert set(summary['strategy']) == {'random', 'centralized'}
    last = frame[(frame['strategy'] == 'random') & (frame['round'] == 2)]
    row = summary[summary['strategy'] == 'random'].iloc[0]
    assert row['final_acc'] == pytest.approx(last['test_acc'].mean())
    assert summary['final_acc'].is_monotonic_decreasing

    assert summarize(pd.DataFrame(columns=CSV_COLUMNS)).empty
