import numpy as np

from objective import Decision
from .strategy import RoundState, Strategy


class CoverageCentricStrategy(Strategy):
    """Greedy maximum coverage of street blocks, expected over
    trajectories.

    Coverage of block b by a vehicle with stops g is
    sum_m q_m * [b in first g_m blocks of trajectory m]; blocks are assumed
    covered independently by different vehicles.
    """

    def __init__(self, config=None, logger=None):
        """Constructor

        :param OptimizerConfig config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        super(CoverageCentricStrategy, self).__init__(
            'coverage_centric', config, logger
        )

    @staticmethod
    def coverage(scenario, vehicle_id, stops):
        """Return coverage probability per block (in scenario order).

        :param Scenario scenario: Scenario
        :param int vehicle_id: Vehicle ID
        :param tuple stops: Stop count per trajectory
        """
        index = {b.id: i for i, b in enumerate(scenario.blocks)}
        covered = np.zeros(len(scenario.blocks))
        for trajectory, g in zip(scenario.vehicle(vehicle_id).trajectories,
                                 stops):
            visited = np.zeros(len(scenario.blocks), dtype=bool)
            visited[[index[b] for b in trajectory.blocks[:g]]] = True
            covered += trajectory.prob * visited
        return np.minimum(covered, 1.0)

    def _best_stops(self, scenario, vehicle_id, uncovered):
        """Return smallest stops with maximal gain.

        Gain is non-decreasing in every g_m, so each trajectory stops at its
        last block that adds uncovered mass.
        """
        index = {b.id: i for i, b in enumerate(scenario.blocks)}
        stops = []
        for trajectory in scenario.vehicle(vehicle_id).trajectories:
            g = trajectory.collected_count
            if trajectory.prob > 0:
                seen = set(trajectory.blocks[:g])
                for n in range(g, trajectory.length):
                    block_id = trajectory.blocks[n]
                    if block_id not in seen and uncovered[index[block_id]] > 0:
                        g = n + 1
                    seen.add(block_id)
            stops.append(g)
        return tuple(stops)

    def select(self, scenario, round_state=None):
        """Return greedy coverage decision.

        Each step adds the vehicle with the largest gain, then fewer
        collected blocks, then smaller ID.

        :param Scenario scenario: Scenario
        :param RoundState round_state: Round inputs
        """
        round_state = round_state or RoundState()
        self.check_budget(scenario)
        uncovered = np.ones(len(scenario.blocks))
        stops = {}
        for _ in range(scenario.budget):
            best = None
            for vehicle_id in scenario.vehicle_ids:
                if vehicle_id in stops:
                    continue
                candidate = self._best_stops(scenario, vehicle_id, uncovered)
                gain = float(np.dot(
                    uncovered, self.coverage(scenario, vehicle_id, candidate)
                ))
                key = (-gain, sum(candidate), vehicle_id)
                if best is None or key < best[0]:
                    best = (key, vehicle_id, candidate)
            _, vehicle_id, candidate = best
            stops[vehicle_id] = candidate
            uncovered = uncovered * (
                1.0 - self.coverage(scenario, vehicle_id, candidate)
            )
        selected = tuple(sorted(stops))
        return Decision(selected=selected, stops={v: stops[v] for v in selected})


def expected_coverage(scenario, decision):
    """Return expected number of covered blocks of a decision.

    :param Scenario scenario: Scenario
    :param Decision decision: Decision
    """
    uncovered = np.ones(len(scenario.blocks))
    for vehicle_id in decision.selected:
        uncovered *= 1.0 - CoverageCentricStrategy.coverage(
            scenario, vehicle_id, decision.stops[vehicle_id]
        )
    return float(np.sum(1.0 - uncovered))


def coverage_centric(scenario):
    return CoverageCentricStrategy().select(scenario)
