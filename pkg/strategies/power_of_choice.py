from .strategy import RoundState, Strategy


class PowerOfChoiceStrategy(Strategy):
    """Vehicles with the highest local loss, ranked over all available
    vehicles.
    """

    NEEDS_ROUND_STATS = True

    def __init__(self, config=None, logger=None):
        """Constructor

        :param OptimizerConfig config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        super(PowerOfChoiceStrategy, self).__init__(
            'power_of_choice', config, logger
        )

    def rank(self, scenario, round_state):
        return self.ranked_by(
            scenario, round_state.local_losses, 'local losses'
        )


def power_of_choice(scenario, local_losses):
    """Return decision of the S vehicles with the highest local losses.

    :param Scenario scenario: Scenario
    :param dict local_losses: Local loss per vehicle ID
    """
    return PowerOfChoiceStrategy().select(
        scenario, RoundState(local_losses=local_losses)
    )
