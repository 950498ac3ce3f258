"""Desk-scale federated training on synthetic street block data.

Vehicles realize one trajectory per round, collect samples from the blocks
they traverse, train a multinomial logistic regression with local SGD and
upload it if they meet the round deadline.
"""
from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np
import pandas as pd
from scipy.special import logsumexp, softmax

from divergence import target_distribution
from errors import EmptyDatasetError, ZeroWeightError
from objective import omega, rho
from optimizer import OptimizerConfig
from strategies import CENTRALIZED, RoundState, create_strategy
from timing import ReceptionEstimator


CSV_COLUMNS = [
    'round', 'strategy', 'seed', 'omega', 'uploads', 'test_acc', 'test_loss',
    'train_loss'
]


@dataclass(frozen=True, eq=False)
class ToyModel:
    """Multinomial logistic regression, one row of weights (with bias in
    the last column) per class.
    """
    weights: np.ndarray

    @classmethod
    def zeros(cls, num_classes, feature_dim):
        return cls(np.zeros((num_classes, feature_dim + 1)))

    def logits(self, features):
        return features @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict(self, features):
        return np.argmax(self.logits(features), axis=1)


@dataclass(frozen=True)
class SimConfig:
    rounds: int = 50
    feature_dim: int = 16
    # std of class means per feature is class_sep / sqrt(feature_dim)
    class_sep: float = 1.0
    noise_std: float = 1.0
    # samples per block pool; traversals draw Poisson(Q_b) from it
    pool_size: int = 2000
    eval_size: int = 2000
    central_size: int = 5000
    # learning rate of the toy model
    lr: float = 0.5
    # default: timing parameters of the scenario
    local_steps: int = None
    batch_size: int = None
    # probability that a vehicle is available in a round
    availability: float = 1.0

    def __post_init__(self):
        for name in ('feature_dim', 'pool_size', 'eval_size',
                     'central_size'):
            if getattr(self, name) < 1:
                raise ValueError("%s must be >= 1" % name)
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not 0 < self.availability <= 1:
            raise ValueError("availability must be in (0, 1]")


@dataclass
class SimData:
    class_means: np.ndarray
    # block ID -> (features, labels)
    pools: dict
    test: tuple
    # pooled samples of the target distribution
    central: tuple


@dataclass(frozen=True, eq=False)
class Realization:
    trajectory: int
    stop: int
    uploaded: bool
    features: np.ndarray = None
    labels: np.ndarray = None


@dataclass
class RoundLog:
    round: int
    strategy: str
    seed: int
    omega: float
    uploads: int
    test_acc: float
    test_loss: float
    # mean local loss of the selected vehicles
    train_loss: float
    trajectories: dict = field(default_factory=dict)
    uploaded: dict = field(default_factory=dict)
    local_losses: dict = field(default_factory=dict)
    gradient_norms: dict = field(default_factory=dict)

    def row(self):
        doc = asdict(self)
        return {column: doc[column] for column in CSV_COLUMNS}


def _rng(*entropy):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        list(entropy)
    )))


def _draw(class_means, probs, size, noise_std, rng):
    labels = rng.choice(len(probs), size=size, p=probs)
    features = class_means[labels] + noise_std * rng.standard_normal(
        (size, class_means.shape[1])
    )
    return features, labels


def synthesize_block_data(scenario, config, seed):
    """Return labeled sample pools per block and held-out data.

    Labels follow the block class distributions, features are class
    conditional Gaussians. The test set follows the target distribution.

    :param Scenario scenario: Scenario
    :param SimConfig config: Simulation config
    :param int seed: Seed
    """
    rng = _rng(seed, 0)
    dim = config.feature_dim
    class_means = rng.normal(
        0.0, config.class_sep / math.sqrt(dim),
        size=(scenario.num_classes, dim)
    )
    pools = {}
    for block in scenario.blocks:
        pools[block.id] = _draw(
            class_means, block.class_dist.array, config.pool_size,
            config.noise_std, rng
        )
    target = target_distribution(scenario).array
    test = _draw(class_means, target, config.eval_size, config.noise_std, rng)
    central = _draw(
        class_means, target, config.central_size, config.noise_std, rng
    )
    return SimData(class_means, pools, test, central)


def _design(features):
    return np.hstack((features, np.ones((features.shape[0], 1))))


def loss_and_gradient(model, features, labels):
    """Return mean cross entropy and its gradient w.r.t. the weights.

    :param ToyModel model: Model
    :param array features: Features, one row per sample
    :param array labels: Class labels
    """
    logits = model.logits(features)
    n = len(labels)
    loss = float(np.mean(
        logsumexp(logits, axis=1) - logits[np.arange(n), labels]
    ))
    residual = softmax(logits, axis=1)
    residual[np.arange(n), labels] -= 1.0
    gradient = residual.T @ _design(features) / n
    return loss, gradient


def local_sgd(model, features, labels, steps, lr, batch_size, seed):
    """Return model after mini-batch SGD steps on a local dataset.

    :param ToyModel model: Initial model
    :param array features: Features
    :param array labels: Labels
    :param int steps: Number of SGD steps
    :param float lr: Learning rate
    :param int batch_size: Mini-batch size
    :param seed: Seed or numpy Generator
    """
    n = len(labels)
    if n == 0:
        raise EmptyDatasetError("local dataset is empty")
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    weights = model.weights.copy()
    for _ in range(steps):
        batch = rng.choice(n, size=min(batch_size, n), replace=False)
        _, gradient = loss_and_gradient(
            ToyModel(weights), features[batch], labels[batch]
        )
        weights -= lr * gradient
    return ToyModel(weights)


def evaluate(model, features, labels):
    """Return (accuracy, loss) of a model on a dataset."""
    loss, _ = loss_and_gradient(model, features, labels)
    accuracy = float(np.mean(model.predict(features) == labels))
    return accuracy, loss


def _collect(scenario, data, blocks, rng):
    """Draw Poisson(Q_b) samples from each traversed block's pool."""
    features = []
    labels = []
    for block_id in blocks:
        pool_x, pool_y = data.pools[block_id]
        count = rng.poisson(scenario.block(block_id).avg_objects)
        index = rng.integers(len(pool_y), size=count)
        features.append(pool_x[index])
        labels.append(pool_y[index])
    return np.vstack(features), np.concatenate(labels)


def realize_round(scenario, decision, seed, estimator=None, data=None):
    """Draw the realized trajectory, upload success and collected data of
    every selected vehicle.

    Without data only trajectories and upload outcomes are drawn.

    :param Scenario scenario: Scenario
    :param Decision decision: Decision
    :param seed: Seed or numpy Generator
    :param ReceptionEstimator estimator: Reception estimator
    :param SimData data: Block sample pools
    """
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    estimator = estimator or ReceptionEstimator(scenario)
    outcomes = {}
    for vehicle_id in decision.selected:
        vehicle = scenario.vehicle(vehicle_id)
        probs = np.array([t.prob for t in vehicle.trajectories])
        m = int(rng.choice(len(probs), p=probs))
        g = decision.stops[vehicle_id][m]
        uploaded = bool(rng.random() < estimator.q_rcv(vehicle_id, m, g))
        features = labels = None
        if data is not None:
            features, labels = _collect(
                scenario, data, vehicle.trajectories[m].blocks[:g], rng
            )
        outcomes[vehicle_id] = Realization(m, g, uploaded, features, labels)
    return outcomes


def aggregate(scenario, models, decision, outcomes):
    """Return rho weighted average of the uploaded models, None if no
    model was uploaded.

    :param Scenario scenario: Scenario
    :param dict models: Local model per vehicle ID
    :param Decision decision: Decision
    :param dict outcomes: Realization per vehicle ID
    """
    uploaders = [
        v for v in decision.selected if outcomes[v].uploaded and v in models
    ]
    if not uploaders:
        return None
    weights = np.array([
        rho(scenario, v, decision.stops[v]) for v in uploaders
    ])
    total = weights.sum()
    if total <= 0:
        raise ZeroWeightError("uploaded models have zero weight")
    weights = weights / total
    return ToyModel(sum(
        w * models[v].weights for w, v in zip(weights, uploaders)
    ))


class Simulator:
    """Federated training of one strategy on one scenario."""

    def __init__(self, scenario, strategy, config=None, optimizer_config=None,
                 logger=None):
        """Constructor

        :param Scenario scenario: Scenario
        :param str strategy: Strategy name or 'centralized'
        :param SimConfig config: Simulation config
        :param OptimizerConfig optimizer_config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        self.scenario = scenario
        self.strategy_name = strategy
        self.config = config or SimConfig()
        self.optimizer_config = optimizer_config or OptimizerConfig()
        self.logger = logger or logging.getLogger(__name__)
        self.strategy = None
        if strategy != CENTRALIZED:
            self.strategy = create_strategy(
                strategy, self.optimizer_config, self.logger
            )
        self.estimator = ReceptionEstimator(
            scenario, self.optimizer_config.mc_config(), self.logger
        )
        self.local_steps = (
            self.config.local_steps or scenario.timing.local_steps
        )
        self.batch_size = self.config.batch_size or scenario.timing.batch_size

    def available(self, rng):
        """Return scenario restricted to this round's available vehicles."""
        scenario = self.scenario
        if self.config.availability >= 1:
            return scenario
        ids = list(scenario.vehicle_ids)
        present = rng.random(len(ids)) < self.config.availability
        if present.sum() < scenario.budget:
            # fill up in random order
            for i in rng.permutation(len(ids)):
                present[i] = True
                if present.sum() >= scenario.budget:
                    break
        available = [v for v, p in zip(ids, present) if p]
        return scenario.restrict(available)

    def round_stats(self, scenario, model, data, rng):
        """Return (gradient norms, local losses) of the current model on data
        already collected by each available vehicle.

        Vehicles are assumed to follow their most probable trajectory.
        """
        norms = {}
        losses = {}
        for vehicle in scenario.vehicles:
            trajectory = max(vehicle.trajectories, key=lambda t: t.prob)
            features, labels = _collect(
                scenario, data,
                trajectory.blocks[:trajectory.collected_count], rng
            )
            if len(labels) == 0:
                norms[vehicle.id] = 0.0
                losses[vehicle.id] = 0.0
                continue
            loss, gradient = loss_and_gradient(model, features, labels)
            norms[vehicle.id] = float(np.linalg.norm(gradient))
            losses[vehicle.id] = loss
        return norms, losses

    def _centralized_round(self, k, model, data, rng, seed):
        features, labels = data.central
        model = local_sgd(
            model, features, labels, self.local_steps, self.config.lr,
            self.scenario.budget * self.batch_size, rng
        )
        loss, _ = loss_and_gradient(model, features, labels)
        accuracy, test_loss = evaluate(model, *data.test)
        return model, RoundLog(
            round=k, strategy=CENTRALIZED, seed=seed, omega=0.0, uploads=0,
            test_acc=accuracy, test_loss=test_loss, train_loss=loss
        )

    def _federated_round(self, k, model, data, rng, seed):
        scenario = self.available(rng)
        norms, losses = {}, {}
        if self.strategy.NEEDS_ROUND_STATS:
            norms, losses = self.round_stats(scenario, model, data, rng)
        decision = self.strategy.select(
            scenario, RoundState(
                round=k, seed=seed, gradient_norms=norms, local_losses=losses
            )
        )
        breakdown = omega(
            scenario, decision, estimator=self.estimator, logger=self.logger
        )
        outcomes = realize_round(
            scenario, decision, rng, self.estimator, data
        )

        models = {}
        local_losses = {}
        for vehicle_id, outcome in outcomes.items():
            if len(outcome.labels) == 0:
                self.logger.info(
                    "round %d: vehicle %s collected no samples"
                    % (k, vehicle_id)
                )
                continue
            local = local_sgd(
                model, outcome.features, outcome.labels, self.local_steps,
                self.config.lr, self.batch_size, rng
            )
            local_losses[vehicle_id], _ = loss_and_gradient(
                local, outcome.features, outcome.labels
            )
            models[vehicle_id] = local

        try:
            aggregated = aggregate(scenario, models, decision, outcomes)
        except ZeroWeightError:
            aggregated = None
        uploads = sum(
            1 for v, o in outcomes.items() if o.uploaded and v in models
        )
        if aggregated is None:
            self.logger.info(
                "round %d: no model uploaded, keeping global model" % k
            )
        else:
            model = aggregated

        accuracy, test_loss = evaluate(model, *data.test)
        train_loss = (
            float(np.mean(list(local_losses.values())))
            if local_losses else float('nan')
        )
        return model, RoundLog(
            round=k, strategy=self.strategy_name, seed=seed,
            omega=breakdown.omega, uploads=uploads, test_acc=accuracy,
            test_loss=test_loss, train_loss=train_loss,
            trajectories={v: o.trajectory for v, o in outcomes.items()},
            uploaded={v: o.uploaded for v, o in outcomes.items()},
            local_losses=local_losses, gradient_norms=norms
        )

    def run(self, seed=0, initial_model=None):
        """Return (round logs, final model).

        :param int seed: Seed of data, realizations and random selection
        :param ToyModel initial_model: Start model (default: zeros)
        """
        data = synthesize_block_data(self.scenario, self.config, seed)
        model = ToyModel.zeros(
            self.scenario.num_classes, self.config.feature_dim
        )
        if initial_model is not None:
            if initial_model.weights.shape != model.weights.shape:
                raise ValueError(
                    "initial model has shape %s, expected %s"
                    % (initial_model.weights.shape, model.weights.shape)
                )
            model = initial_model
        logs = []
        for k in range(self.config.rounds):
            rng = _rng(seed, 1, k)
            if self.strategy is None:
                model, log = self._centralized_round(k, model, data, rng, seed)
            else:
                model, log = self._federated_round(k, model, data, rng, seed)
            self.logger.debug(
                "%s seed %d round %d: acc %.4f, omega %.6g, uploads %d"
                % (log.strategy, seed, k, log.test_acc, log.omega,
                   log.uploads)
            )
            logs.append(log)
        return logs, model


def run_training(scenario, strategy, config=None, optimizer_config=None,
                 seed=0, initial_model=None, logger=None):
    """Return round logs of federated (or centralized) training.

    :param Scenario scenario: Scenario
    :param str strategy: Strategy name or 'centralized'
    :param SimConfig config: Simulation config
    :param OptimizerConfig optimizer_config: Optimizer and timing config
    :param int seed: Seed
    :param ToyModel initial_model: Start model (default: zeros)
    :param Logger logger: Application logger
    """
    simulator = Simulator(scenario, strategy, config, optimizer_config, logger)
    return simulator.run(seed, initial_model)[0]


def logs_to_frame(logs):
    """Return round logs as DataFrame with the CSV columns."""
    return pd.DataFrame([log.row() for log in logs], columns=CSV_COLUMNS)


def summarize(frame):
    """Return mean final accuracy, mean omega and mean uploads per strategy.

    :param DataFrame frame: Round logs of several strategies and seeds
    """
    if frame.empty:
        return pd.DataFrame(
            columns=['strategy', 'final_acc', 'omega', 'uploads']
        )
    last = frame[frame['round'] == frame.groupby(
        ['strategy', 'seed'])['round'].transform('max')]
    summary = pd.DataFrame({
        'final_acc': last.groupby('strategy')['test_acc'].mean(),
        'omega': frame.groupby('strategy')['omega'].mean(),
        'uploads': frame.groupby('strategy')['uploads'].mean()
    }).reset_index()
    return summary.sort_values(
        ['final_acc', 'strategy'], ascending=[False, True]
    ).reset_index(drop=True)


def load_model(path):
    return ToyModel(np.load(path))


def save_model(model, path):
    with open(path, 'wb') as f:
        np.save(f, model.weights)
