from optimizer import Optimizer
from .strategy import Strategy


class Sense4FLStrategy(Strategy):
    """Trajectory-aware selection and data collection by the optimizer"""

    def __init__(self, config=None, logger=None):
        """Constructor

        :param OptimizerConfig config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        super(Sense4FLStrategy, self).__init__('sense4fl', config, logger)
        # Selection of the last round
        self.selection = None

    def select(self, scenario, round_state=None):
        """Return optimized decision.

        :param Scenario scenario: Scenario with available vehicles
        :param RoundState round_state: Round inputs
        """
        self.selection = Optimizer(scenario, self.config, self.logger).solve()
        return self.selection.decision
