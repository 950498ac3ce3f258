"""Ablations that keep another strategy's vehicles but fix the stops."""
from objective import Decision
from .strategy import RoundState, Strategy


def _select(scenario, selector, round_state):
    if isinstance(selector, Strategy):
        return selector.select(scenario, round_state)
    return selector(scenario)


def full_data(scenario, selector, round_state=None):
    """Return selector's vehicles collecting along the whole trajectory
    (g = N).

    :param Scenario scenario: Scenario
    :param selector: Strategy or function returning a Decision
    :param RoundState round_state: Round inputs
    """
    decision = _select(scenario, selector, round_state)
    return Decision(
        selected=decision.selected,
        stops={
            v: tuple(t.length for t in scenario.vehicle(v).trajectories)
            for v in decision.selected
        }
    )


def selection_only(scenario, selector, round_state=None):
    """Return selector's vehicles stopping upon selection (g = c).

    :param Scenario scenario: Scenario
    :param selector: Strategy or function returning a Decision
    :param RoundState round_state: Round inputs
    """
    decision = _select(scenario, selector, round_state)
    return Decision(
        selected=decision.selected,
        stops={
            v: tuple(
                t.collected_count for t in scenario.vehicle(v).trajectories
            )
            for v in decision.selected
        }
    )


class AblationStrategy(Strategy):
    """Wrap a strategy and replace its stops"""

    def __init__(self, name, selector, stop_rule, logger=None):
        """Constructor

        :param str name: Strategy name
        :param Strategy selector: Wrapped strategy
        :param func stop_rule: full_data or selection_only
        :param Logger logger: Application logger
        """
        super(AblationStrategy, self).__init__(
            name, selector.config, logger or selector.logger
        )
        self.selector = selector
        self.stop_rule = stop_rule
        self.NEEDS_ROUND_STATS = selector.NEEDS_ROUND_STATS

    def select(self, scenario, round_state=None):
        return self.stop_rule(
            scenario, self.selector, round_state or RoundState()
        )
