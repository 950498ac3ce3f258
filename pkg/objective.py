"""Divergence objective of a selection decision and the convergence bound
it enters.
"""
from dataclasses import dataclass, field
import itertools
import logging
import math

import numpy as np

from divergence import collected_distribution, emd, prefix_distributions, \
    target_distribution
from errors import IneligibleVehicleError, InvalidStopError, ZeroWeightError
from timing import ReceptionEstimator


@dataclass(frozen=True)
class Decision:
    """Selected vehicles and their stop counts.

    stops maps a vehicle ID to one stop count per trajectory.
    """
    selected: tuple
    stops: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'selected': list(self.selected),
            'stops': {
                str(v): list(self.stops[v]) for v in self.selected
            }
        }


def validate_decision(scenario, decision):
    """Check that every selected vehicle has a valid stop per trajectory.

    :param Scenario scenario: Scenario
    :param Decision decision: Decision
    """
    if len(set(decision.selected)) != len(decision.selected):
        raise InvalidStopError("decision selects a vehicle twice")
    for vehicle_id in decision.selected:
        try:
            vehicle = scenario.vehicle(vehicle_id)
        except KeyError:
            raise InvalidStopError("unknown vehicle %s" % vehicle_id)
        stops = decision.stops.get(vehicle_id)
        if stops is None or len(stops) != len(vehicle.trajectories):
            raise InvalidStopError(
                "vehicle %s needs one stop per trajectory" % vehicle_id
            )
        for m, (trajectory, g) in enumerate(zip(vehicle.trajectories, stops)):
            if not trajectory.collected_count <= g <= trajectory.length:
                raise InvalidStopError(
                    "vehicle %s trajectory %d: stop %d outside [%d, %d]"
                    % (vehicle_id, m, g, trajectory.collected_count,
                       trajectory.length)
                )


@dataclass(frozen=True)
class VehicleTerms:
    rho: float
    d_tilde: float
    xi_bar: tuple


@dataclass(frozen=True)
class DivergenceBreakdown:
    """Objective value of a decision and its components.

    d_client includes the delta factor, client_term does not.
    """
    d_client: float
    client_term: float
    d_global: float
    omega: float
    delta: float
    per_vehicle: dict
    # selected vehicles that can never upload under their stops
    excluded: tuple = ()

    def to_dict(self):
        def finite(value):
            return value if math.isfinite(value) else None

        return {
            'omega': finite(self.omega),
            'd_client': finite(self.d_client),
            'client_term': finite(self.client_term),
            'd_global': finite(self.d_global),
            'delta': self.delta,
            'per_vehicle': {
                str(v): {
                    'rho': t.rho,
                    'd_tilde': t.d_tilde,
                    'xi_bar': list(t.xi_bar)
                }
                for v, t in self.per_vehicle.items()
            },
            'excluded': list(self.excluded)
        }


def delta(local_steps, lr, lipschitz):
    """Return local drift factor sum_{j=1}^{T-1} (1 + lr * lipschitz)^j.

    :param int local_steps: Local SGD steps T
    :param float lr: Learning rate
    :param float lipschitz: Max per-class gradient Lipschitz constant
    """
    base = 1.0 + lr * lipschitz
    return math.fsum(base ** j for j in range(1, local_steps))


def scenario_delta(scenario):
    return delta(
        scenario.timing.local_steps, scenario.learning.lr,
        scenario.learning.lipschitz
    )


def _check_stops(vehicle, stops):
    if len(stops) != len(vehicle.trajectories):
        raise InvalidStopError(
            "vehicle %s: %d stops for %d trajectories"
            % (vehicle.id, len(stops), len(vehicle.trajectories))
        )
    for m, (trajectory, g) in enumerate(zip(vehicle.trajectories, stops)):
        if not trajectory.collected_count <= g <= trajectory.length:
            raise InvalidStopError(
                "vehicle %s trajectory %d: stop %d outside [%d, %d]"
                % (vehicle.id, m, g, trajectory.collected_count,
                   trajectory.length)
            )


def rho(scenario, vehicle_id, stops):
    """Return expected sum of block weights collected by a vehicle.

    :param Scenario scenario: Scenario
    :param int vehicle_id: Vehicle ID
    :param tuple stops: Stop count per trajectory
    """
    vehicle = scenario.vehicle(vehicle_id)
    _check_stops(vehicle, stops)
    return math.fsum(
        t.prob * math.fsum(scenario.block(b).weight for b in t.blocks[:g])
        for t, g in zip(vehicle.trajectories, stops)
    )


def _estimator(scenario, mc_config, estimator):
    if estimator is not None:
        return estimator
    return ReceptionEstimator(scenario, mc_config)


def xi_bar(scenario, vehicle_id, stops, mc_config=None, estimator=None):
    """Return trajectory mixing weights q * q_rcv, normalized.

    Raises IneligibleVehicleError if all products are zero.

    :param Scenario scenario: Scenario
    :param int vehicle_id: Vehicle ID
    :param tuple stops: Stop count per trajectory
    :param McConfig mc_config: Reception evaluation mode
    :param ReceptionEstimator estimator: Shared estimator (optional)
    """
    vehicle = scenario.vehicle(vehicle_id)
    _check_stops(vehicle, stops)
    estimator = _estimator(scenario, mc_config, estimator)
    products = np.array([
        t.prob * estimator.q_rcv(vehicle_id, m, g)
        for m, (t, g) in enumerate(zip(vehicle.trajectories, stops))
    ])
    total = products.sum()
    if total <= 0:
        raise IneligibleVehicleError(vehicle_id)
    return products / total


def client_divergence(scenario, vehicle_id, stops, mc_config=None,
                      estimator=None):
    """Return xi_bar weighted divergence between the collected
    distributions of a vehicle and the target distribution.

    :param Scenario scenario: Scenario
    :param int vehicle_id: Vehicle ID
    :param tuple stops: Stop count per trajectory
    :param McConfig mc_config: Reception evaluation mode
    :param ReceptionEstimator estimator: Shared estimator (optional)
    """
    estimator = _estimator(scenario, mc_config, estimator)
    weights = xi_bar(scenario, vehicle_id, stops, estimator=estimator)
    target = target_distribution(scenario)
    return math.fsum(
        w * emd(collected_distribution(scenario, vehicle_id, m, g), target)
        for m, (w, g) in enumerate(zip(weights, stops))
    )


def _vehicle_mixture(scenario, vehicle_id, stops, weights):
    return sum(
        w * collected_distribution(scenario, vehicle_id, m, g).array
        for m, (w, g) in enumerate(zip(weights, stops))
    )


def global_divergence(scenario, decision, mc_config=None, estimator=None):
    """Return divergence between the aggregated collected distribution of
    all selected vehicles and the target distribution.

    Raises ZeroWeightError if all aggregation weights are zero.

    :param Scenario scenario: Scenario
    :param Decision decision: Decision
    :param McConfig mc_config: Reception evaluation mode
    :param ReceptionEstimator estimator: Shared estimator (optional)
    """
    validate_decision(scenario, decision)
    estimator = _estimator(scenario, mc_config, estimator)
    weighted = np.zeros(scenario.num_classes)
    total = 0.0
    for vehicle_id in decision.selected:
        stops = decision.stops[vehicle_id]
        weight = rho(scenario, vehicle_id, stops)
        weights = xi_bar(scenario, vehicle_id, stops, estimator=estimator)
        weighted += weight * _vehicle_mixture(
            scenario, vehicle_id, stops, weights
        )
        total += weight
    if total <= 0:
        raise ZeroWeightError("aggregation weights of decision are all zero")
    return emd(weighted / total, target_distribution(scenario))


def omega(scenario, decision, mc_config=None, estimator=None, logger=None):
    """Return the full divergence breakdown of a decision.

    Omega is infinite if a selected vehicle cannot upload under its stops
    or if no aggregation weight remains. Such vehicles are listed in
    excluded.

    :param Scenario scenario: Scenario
    :param Decision decision: Decision
    :param McConfig mc_config: Reception evaluation mode
    :param ReceptionEstimator estimator: Shared estimator (optional)
    :param Logger logger: Logger
    """
    logger = logger or logging.getLogger(__name__)
    validate_decision(scenario, decision)
    estimator = _estimator(scenario, mc_config, estimator)
    factor = scenario_delta(scenario)
    target = target_distribution(scenario)

    per_vehicle = {}
    excluded = []
    weighted_mix = np.zeros(scenario.num_classes)
    weighted_div = []
    total = 0.0
    for vehicle_id in decision.selected:
        stops = decision.stops[vehicle_id]
        try:
            weights = xi_bar(scenario, vehicle_id, stops, estimator=estimator)
        except IneligibleVehicleError:
            logger.warning(
                "vehicle %s cannot upload with stops %s"
                % (vehicle_id, list(stops))
            )
            excluded.append(vehicle_id)
            continue
        weight = rho(scenario, vehicle_id, stops)
        d_tilde = math.fsum(
            w * emd(collected_distribution(scenario, vehicle_id, m, g), target)
            for m, (w, g) in enumerate(zip(weights, stops))
        )
        per_vehicle[vehicle_id] = VehicleTerms(
            rho=weight, d_tilde=d_tilde, xi_bar=tuple(float(w) for w in weights)
        )
        weighted_mix += weight * _vehicle_mixture(
            scenario, vehicle_id, stops, weights
        )
        weighted_div.append(weight * d_tilde)
        total += weight

    if excluded or total <= 0:
        inf = float('inf')
        return DivergenceBreakdown(
            d_client=inf, client_term=inf, d_global=inf, omega=inf,
            delta=factor, per_vehicle=per_vehicle, excluded=tuple(excluded)
        )

    client_term = math.fsum(weighted_div) / total
    d_global = emd(weighted_mix / total, target)
    return DivergenceBreakdown(
        d_client=factor * client_term,
        client_term=client_term,
        d_global=d_global,
        omega=factor * client_term + d_global,
        delta=factor,
        per_vehicle=per_vehicle,
        excluded=tuple(excluded)
    )


class VehicleTable:
    """Per-vehicle lookup tables over stop offsets g - c.

    Evaluates rho, d_tilde, the vehicle mixture and eligibility for many
    stop vectors at once.
    """

    def __init__(self, scenario, vehicle_id, estimator, target,
                 enum_limit=256):
        """Constructor

        :param Scenario scenario: Scenario
        :param int vehicle_id: Vehicle ID
        :param ReceptionEstimator estimator: Reception estimator
        :param array target: Target distribution
        :param int enum_limit: Max number of stop vectors to enumerate
        """
        vehicle = scenario.vehicle(vehicle_id)
        self.vehicle_id = vehicle_id
        self.collected = np.array(
            [t.collected_count for t in vehicle.trajectories]
        )
        self.sizes = np.array(
            [t.length - t.collected_count + 1 for t in vehicle.trajectories]
        )
        self.q = np.array([t.prob for t in vehicle.trajectories])

        self.lsum = []
        self.rcv = []
        self.emd = []
        self.mix = []
        for m, trajectory in enumerate(vehicle.trajectories):
            c = trajectory.collected_count
            weights = np.array(
                [scenario.block(b).weight for b in trajectory.blocks]
            )
            prefixes = prefix_distributions(scenario, trajectory)[c - 1:]
            self.lsum.append(np.cumsum(weights)[c - 1:])
            self.rcv.append(estimator.curve(vehicle_id, m))
            self.emd.append(np.abs(prefixes - target).sum(axis=1))
            self.mix.append(prefixes)

        self.num_combos = int(np.prod(self.sizes))
        self.combos = None
        self.all_terms = None
        if self.num_combos <= enum_limit:
            self.combos = np.array(
                list(itertools.product(*(range(n) for n in self.sizes))),
                dtype=int
            ).reshape(-1, len(self.sizes))
            self.all_terms = self.terms(self.combos)

    @property
    def exact(self):
        return self.combos is not None

    @property
    def eligible(self):
        """Whether some trajectory can upload at g = c."""
        return bool(self.terms(np.zeros((1, len(self.sizes)), dtype=int))[3][0])

    def terms(self, offsets):
        """Return (rho, d_tilde, mixture, eligible) arrays, one row per
        stop offset vector.

        :param array offsets: Stop offsets, shape (K, M)
        """
        offsets = np.asarray(offsets, dtype=int)
        rows = offsets.shape[0]
        rho_ = np.zeros(rows)
        products = np.zeros((rows, len(self.sizes)))
        for m in range(len(self.sizes)):
            k = offsets[:, m]
            rho_ += self.q[m] * self.lsum[m][k]
            products[:, m] = self.q[m] * self.rcv[m][k]
        totals = products.sum(axis=1)
        eligible = totals > 0
        xi = products / np.where(eligible, totals, 1.0)[:, None]
        d_tilde = np.zeros(rows)
        mix = np.zeros((rows, self.mix[0].shape[1]))
        for m in range(len(self.sizes)):
            k = offsets[:, m]
            d_tilde += xi[:, m] * self.emd[m][k]
            mix += xi[:, m, None] * self.mix[m][k]
        return rho_, d_tilde, mix, eligible

    def stops(self, offsets):
        """Return stop counts for one offset vector."""
        return tuple(int(g) for g in self.collected + np.asarray(offsets))

    def offsets(self, stops):
        """Return offset vector for stop counts."""
        return np.asarray(stops, dtype=int) - self.collected


@dataclass(frozen=True)
class BoundParams:
    """User supplied constants of the convergence bound."""
    beta: float
    L: float
    eps: float
    phi: float
    U: float
    K: int


@dataclass(frozen=True)
class BoundResult:
    feasible: bool
    # None if infeasible
    value: float
    denominator: float
    # eta <= 1 / beta
    lr_condition: bool
    # eta < (2 / beta) * (1 - L * U * sum(omega) / (K * T * phi * eps^2))
    drift_condition: bool

    def to_dict(self):
        return {
            'feasible': self.feasible,
            'value': self.value,
            'denominator': self.denominator,
            'conditions': {
                'lr': self.lr_condition,
                'drift': self.drift_condition
            }
        }


def convergence_bound(omega_per_round, params, timing, learning):
    """Evaluate the training loss bound for a sequence of per-round omegas.

    Returns an infeasible result if the denominator is not positive.

    :param list omega_per_round: Omega per round
    :param BoundParams params: Bound constants
    :param TimingParams timing: Timing parameters
    :param LearningParams learning: Learning parameters
    """
    for name in ('beta', 'L', 'eps', 'phi', 'U', 'K'):
        if not getattr(params, name) > 0:
            raise ValueError("bound parameter %s must be > 0" % name)

    lr = learning.lr
    steps = timing.local_steps
    total = math.fsum(omega_per_round)
    drift = params.L / params.eps ** 2 * params.U * total
    progress = params.phi * params.K * steps * (1 - params.beta * lr / 2)
    denominator = lr * (progress - drift)

    lr_condition = lr <= 1.0 / params.beta
    drift_condition = lr < 2.0 / params.beta * (
        1 - params.L * params.U * total
        / (params.K * steps * params.phi * params.eps ** 2)
    )
    if denominator <= 0 or not math.isfinite(denominator):
        return BoundResult(
            feasible=False, value=None, denominator=denominator,
            lr_condition=lr_condition, drift_condition=drift_condition
        )
    return BoundResult(
        feasible=True, value=1.0 / denominator, denominator=denominator,
        lr_condition=lr_condition, drift_condition=drift_condition
    )
