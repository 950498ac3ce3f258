"""Class-distribution arithmetic.

All divergences are class-wise L1 distances, sum_i |p_i - q_i|, in [0, 2].
This is twice the total variation distance; no 1/2 factor is applied.
"""
from dataclasses import dataclass
import math

import numpy as np

from errors import DistributionLengthError, InvalidStopError


# tolerance below which a probability vector is kept as is
NORMALIZE_TOL = 1e-12


def normalized(values):
    """Return values rescaled to sum 1 as a float array.

    Vectors already within NORMALIZE_TOL of the simplex are returned
    unchanged, so normalizing twice never moves a value.

    :param iterable values: Non-negative weights
    """
    arr = np.asarray(values, dtype=float)
    total = math.fsum(arr)
    if total <= 0:
        raise ValueError("cannot normalize weights summing to %s" % total)
    if abs(total - 1.0) <= NORMALIZE_TOL:
        return arr
    return arr / total


@dataclass(frozen=True)
class ClassDistribution:
    """Normalized per-class probability vector"""
    probs: tuple

    @classmethod
    def from_array(cls, values):
        """Create distribution from weights, renormalizing once.

        :param iterable values: Non-negative class weights
        """
        return cls(tuple(float(p) for p in normalized(values)))

    @property
    def array(self):
        return np.asarray(self.probs, dtype=float)

    def __len__(self):
        return len(self.probs)


def _as_array(dist):
    if isinstance(dist, ClassDistribution):
        return dist.array
    return np.asarray(dist, dtype=float)


def emd(p, q):
    """Return class-wise L1 divergence between two distributions.

    :param ClassDistribution p: First distribution (or array)
    :param ClassDistribution q: Second distribution (or array)
    """
    p = _as_array(p)
    q = _as_array(q)
    if p.shape[-1] != q.shape[-1]:
        raise DistributionLengthError(
            "distribution lengths differ: %d != %d"
            % (p.shape[-1], q.shape[-1])
        )
    return float(np.abs(p - q).sum())


def mixture(weights, dists):
    """Return weighted mixture of distributions (one row per dist).

    :param array weights: Non-negative mixing weights
    :param array dists: Matrix of distributions, one per row
    """
    weights = np.asarray(weights, dtype=float)
    mixed = weights @ np.asarray(dists, dtype=float)
    return ClassDistribution.from_array(mixed)


def _class_matrix(blocks):
    return np.array([b.class_dist.probs for b in blocks], dtype=float)


def global_distribution(scenario):
    """Return the object-count weighted distribution of the whole region.

    :param Scenario scenario: Scenario
    """
    blocks = scenario.blocks
    counts = np.array([b.avg_objects for b in blocks], dtype=float)
    return mixture(counts / counts.sum(), _class_matrix(blocks))


def target_distribution(scenario):
    """Return the importance weighted block mixture used as divergence
    reference.

    :param Scenario scenario: Scenario
    """
    blocks = scenario.blocks
    weights = np.array([b.weight for b in blocks], dtype=float)
    return mixture(weights, _class_matrix(blocks))


def prefix_distributions(scenario, trajectory):
    """Return collected distributions for every prefix of a trajectory.

    Row n-1 is the distribution collected from the first n blocks.

    :param Scenario scenario: Scenario
    :param Trajectory trajectory: Trajectory
    """
    blocks = [scenario.block(b) for b in trajectory.blocks]
    counts = np.array([b.avg_objects for b in blocks], dtype=float)
    weighted = np.cumsum(counts[:, None] * _class_matrix(blocks), axis=0)
    mixed = weighted / weighted.sum(axis=1, keepdims=True)
    # renormalize rows to absorb rounding
    return mixed / mixed.sum(axis=1, keepdims=True)


def collected_distribution(scenario, vehicle_id, m, g):
    """Return the distribution collected from the first g blocks of
    trajectory m.

    :param Scenario scenario: Scenario
    :param int vehicle_id: Vehicle ID
    :param int m: Trajectory index (0-based)
    :param int g: Stop count
    """
    trajectory = scenario.trajectory(vehicle_id, m)
    if not trajectory.collected_count <= g <= len(trajectory.blocks):
        raise InvalidStopError(
            "vehicle %s trajectory %d: stop %d outside [%d, %d]"
            % (vehicle_id, m, g, trajectory.collected_count,
               len(trajectory.blocks))
        )
    blocks = [scenario.block(b) for b in trajectory.blocks[:g]]
    counts = np.array([b.avg_objects for b in blocks], dtype=float)
    return mixture(counts / counts.sum(), _class_matrix(blocks))
