from .strategy import RoundState, Strategy


class GradientBasedStrategy(Strategy):
    """Vehicles with the largest local gradient norms"""

    NEEDS_ROUND_STATS = True

    def __init__(self, config=None, logger=None):
        """Constructor

        :param OptimizerConfig config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        super(GradientBasedStrategy, self).__init__(
            'gradient_based', config, logger
        )

    def rank(self, scenario, round_state):
        return self.ranked_by(
            scenario, round_state.gradient_norms, 'gradient norms'
        )


def gradient_based(scenario, gradient_norms):
    """Return decision of the S vehicles with the largest gradient norms.

    :param Scenario scenario: Scenario
    :param dict gradient_norms: Gradient norm per vehicle ID
    """
    return GradientBasedStrategy().select(
        scenario, RoundState(gradient_norms=gradient_norms)
    )
