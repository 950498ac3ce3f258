"""Latency model and successful-reception probability of local models."""
from dataclasses import dataclass
import logging

import numpy as np

from errors import InvalidStopError


DETERMINISTIC = 'deterministic'
TRUNCATED_GAUSSIAN = 'truncated_gaussian'
SOJOURN_KINDS = (DETERMINISTIC, TRUNCATED_GAUSSIAN)

MONTE_CARLO = 'monte_carlo'
TIMING_MODES = (DETERMINISTIC, MONTE_CARLO)


@dataclass(frozen=True)
class SojournModel:
    """Sojourn time per trajectory position, truncated to [0, 2 * mean]"""
    mean_s: tuple
    std_s: tuple
    dist: str = TRUNCATED_GAUSSIAN


@dataclass(frozen=True)
class ReceptionEstimate:
    q_rcv: float
    mean_total_s: float
    # (data collection, computing, uploading) in seconds
    components: tuple


@dataclass(frozen=True)
class McConfig:
    """How reception probabilities are evaluated.

    Monte Carlo draws are split into batches of batch_samples; batch i of
    trajectory (v, m) uses the PCG64 stream seeded with
    SeedSequence([seed, v, m, i]).
    """
    mode: str = MONTE_CARLO
    samples: int = 10000
    seed: int = 0
    batch_samples: int = 2500

    @property
    def deterministic(self):
        return self.mode == DETERMINISTIC


def _check_stop(trajectory, vehicle_id, m, g):
    if not trajectory.collected_count <= g <= len(trajectory.blocks):
        raise InvalidStopError(
            "vehicle %s trajectory %d: stop %d outside [%d, %d]"
            % (vehicle_id, m, g, trajectory.collected_count,
               len(trajectory.blocks))
        )


def data_collection_time(scenario, vehicle_id, m, g, sojourn=None):
    """Return seconds spent collecting data after selection, i.e. the
    sojourn over trajectory positions c+1..g.

    :param Scenario scenario: Scenario
    :param int vehicle_id: Vehicle ID
    :param int m: Trajectory index (0-based)
    :param int g: Stop count
    :param array sojourn: Sojourn sample per position (default: means)
    """
    trajectory = scenario.trajectory(vehicle_id, m)
    _check_stop(trajectory, vehicle_id, m, g)
    if sojourn is None:
        sojourn = trajectory.sojourn.mean_s
    c = trajectory.collected_count
    return float(np.sum(np.asarray(sojourn, dtype=float)[c:g]))


def compute_time(timing, vehicle):
    """Return local training time T * c_v * D_batch / f_v in seconds.

    :param TimingParams timing: Timing parameters
    :param VehicleProfile vehicle: Vehicle
    """
    return (
        timing.local_steps * vehicle.cycles_per_sample * timing.batch_size
        / vehicle.flops
    )


def upload_time(timing, vehicle):
    """Return conservative upload time omega / R_min + t_trans in seconds.

    :param TimingParams timing: Timing parameters
    :param VehicleProfile vehicle: Vehicle
    """
    return timing.model_bits / vehicle.min_rate_bps + timing.wired_delay_s


def sample_sojourns(sojourn, size, rng):
    """Draw sojourn times, one row per sample and one column per position.

    Truncated Gaussians are sampled by rejection on [0, 2 * mean].

    :param SojournModel sojourn: Sojourn model
    :param int size: Number of samples
    :param Generator rng: Numpy random generator
    """
    mean = np.asarray(sojourn.mean_s, dtype=float)
    if sojourn.dist == DETERMINISTIC:
        return np.tile(mean, (size, 1))

    std = np.asarray(sojourn.std_s, dtype=float)
    draws = rng.normal(mean, std, size=(size, len(mean)))
    rejected = (draws < 0) | (draws > 2 * mean)
    while rejected.any():
        redraw = rng.normal(mean, std, size=draws.shape)
        draws[rejected] = redraw[rejected]
        rejected = (draws < 0) | (draws > 2 * mean)
    return draws


class ReceptionEstimator:
    """Reception probabilities for every stop count of a trajectory.

    Curves are cached per (vehicle, trajectory). In Monte Carlo mode all
    stop counts share the same sojourn draws, so an estimate never
    increases with the stop count.
    """

    def __init__(self, scenario, mc_config=None, logger=None):
        """Constructor

        :param Scenario scenario: Scenario
        :param McConfig mc_config: Evaluation mode
        :param Logger logger: Application logger
        """
        self.scenario = scenario
        self.mc_config = mc_config or McConfig()
        self.logger = logger or logging.getLogger(__name__)
        self._curves = {}

    def _draws(self, vehicle_id, m, trajectory):
        config = self.mc_config
        batches = []
        remaining = config.samples
        batch = 0
        while remaining > 0:
            size = min(config.batch_samples, remaining)
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([config.seed, vehicle_id, m, batch])
            ))
            batches.append(sample_sojourns(trajectory.sojourn, size, rng))
            remaining -= size
            batch += 1
        return np.vstack(batches)

    def _curve(self, vehicle_id, m):
        key = (vehicle_id, m)
        if key not in self._curves:
            scenario = self.scenario
            vehicle = scenario.vehicle(vehicle_id)
            trajectory = vehicle.trajectories[m]
            c = trajectory.collected_count
            fixed = (
                compute_time(scenario.timing, vehicle)
                + upload_time(scenario.timing, vehicle)
            )
            deadline = scenario.timing.deadline_s

            if self.mc_config.deterministic:
                sojourn = np.asarray(trajectory.sojourn.mean_s, dtype=float)
                dct = np.concatenate(([0.0], np.cumsum(sojourn[c:])))
                totals = dct + fixed
                q_rcv = (totals <= deadline).astype(float)
                mean_dct = dct
            else:
                draws = self._draws(vehicle_id, m, trajectory)
                dct = np.hstack((
                    np.zeros((draws.shape[0], 1)),
                    np.cumsum(draws[:, c:], axis=1)
                ))
                q_rcv = (dct + fixed <= deadline).mean(axis=0)
                mean_dct = dct.mean(axis=0)

            self.logger.debug(
                "reception curve vehicle %s trajectory %d: %s"
                % (vehicle_id, m, np.array2string(q_rcv, precision=4))
            )
            self._curves[key] = (q_rcv, mean_dct, fixed)
        return self._curves[key]

    def curve(self, vehicle_id, m):
        """Return q_rcv for stop counts c..N of trajectory m.

        :param int vehicle_id: Vehicle ID
        :param int m: Trajectory index (0-based)
        """
        return self._curve(vehicle_id, m)[0]

    def q_rcv(self, vehicle_id, m, g):
        trajectory = self.scenario.trajectory(vehicle_id, m)
        _check_stop(trajectory, vehicle_id, m, g)
        return float(self.curve(vehicle_id, m)[g - trajectory.collected_count])

    def estimate(self, vehicle_id, m, g):
        """Return reception estimate for stopping after g blocks.

        :param int vehicle_id: Vehicle ID
        :param int m: Trajectory index (0-based)
        :param int g: Stop count
        """
        scenario = self.scenario
        vehicle = scenario.vehicle(vehicle_id)
        trajectory = scenario.trajectory(vehicle_id, m)
        _check_stop(trajectory, vehicle_id, m, g)
        q_rcv, mean_dct, fixed = self._curve(vehicle_id, m)
        offset = g - trajectory.collected_count
        dct_s = float(mean_dct[offset])
        return ReceptionEstimate(
            q_rcv=float(q_rcv[offset]),
            mean_total_s=dct_s + fixed,
            components=(
                dct_s,
                compute_time(scenario.timing, vehicle),
                upload_time(scenario.timing, vehicle)
            )
        )


def reception_probability(scenario, vehicle_id, m, g, mc_config=None):
    """Return probability that collection, training and upload finish
    before the round deadline.

    :param Scenario scenario: Scenario
    :param int vehicle_id: Vehicle ID
    :param int m: Trajectory index (0-based)
    :param int g: Stop count
    :param McConfig mc_config: Evaluation mode (default: Monte Carlo)
    """
    estimator = ReceptionEstimator(scenario, mc_config)
    return estimator.estimate(vehicle_id, m, g)
