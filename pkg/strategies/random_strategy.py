import numpy as np

from objective import Decision
from .strategy import RoundState, Strategy


class RandomStrategy(Strategy):
    """Uniform random vehicles with uniform random stops"""

    def __init__(self, config=None, logger=None):
        """Constructor

        :param OptimizerConfig config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        super(RandomStrategy, self).__init__('random', config, logger)

    def select(self, scenario, round_state=None):
        """Return random decision, seeded by round seed and index.

        :param Scenario scenario: Scenario
        :param RoundState round_state: Round inputs
        """
        round_state = round_state or RoundState()
        self.check_budget(scenario)
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([round_state.seed, round_state.round])
        ))
        ids = list(scenario.vehicle_ids)
        chosen = sorted(
            ids[i] for i in rng.permutation(len(ids))[:scenario.budget]
        )
        stops = {}
        for vehicle_id in chosen:
            stops[vehicle_id] = tuple(
                int(rng.integers(t.collected_count, t.length + 1))
                for t in scenario.vehicle(vehicle_id).trajectories
            )
        return Decision(selected=tuple(chosen), stops=stops)


def random_select(scenario, seed):
    """Return uniform random S-subset with uniform random stops.

    :param Scenario scenario: Scenario
    :param int seed: Seed
    """
    return RandomStrategy().select(scenario, RoundState(seed=seed))
