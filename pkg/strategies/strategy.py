from dataclasses import dataclass, field
import logging

from errors import InfeasibleScenarioError, RoundStateError
from objective import Decision
from optimizer import OptimizerConfig


@dataclass(frozen=True)
class RoundState:
    """Per-round inputs of a strategy.

    gradient_norms and local_losses map vehicle IDs to statistics computed
    by the simulator before selection.
    """
    round: int = 0
    seed: int = 0
    gradient_norms: dict = field(default_factory=dict)
    local_losses: dict = field(default_factory=dict)


class Strategy:
    """Strategy base class

    Select S vehicles and their stop counts for one round.
    """

    # set if the simulator must provide per-vehicle round statistics
    NEEDS_ROUND_STATS = False

    def __init__(self, name, config=None, logger=None):
        """Constructor

        :param str name: Strategy name (e.g. 'random')
        :param OptimizerConfig config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        self.name = name
        self.config = config or OptimizerConfig()
        self.logger = logger or logging.getLogger(__name__)

    def select(self, scenario, round_state=None):
        """Return decision for one round.

        :param Scenario scenario: Scenario with available vehicles
        :param RoundState round_state: Round inputs
        """
        round_state = round_state or RoundState()
        self.check_budget(scenario)
        ranked = self.rank(scenario, round_state)
        selected = sorted(ranked[:scenario.budget])
        stops = {
            v: self.stops_for(scenario, v, round_state) for v in selected
        }
        self.logger.debug(
            "%s selected %s in round %d"
            % (self.name, selected, round_state.round)
        )
        return Decision(selected=tuple(selected), stops=stops)

    def check_budget(self, scenario):
        if len(scenario.vehicles) < scenario.budget:
            raise InfeasibleScenarioError(
                "%d vehicles available for budget %d"
                % (len(scenario.vehicles), scenario.budget)
            )

    def rank(self, scenario, round_state):
        """Return vehicle IDs in order of preference.

        :param Scenario scenario: Scenario
        :param RoundState round_state: Round inputs
        """
        raise NotImplementedError

    def stops_for(self, scenario, vehicle_id, round_state):
        """Return stop counts of a selected vehicle.

        Default: stop collecting upon selection (g = c).

        :param Scenario scenario: Scenario
        :param int vehicle_id: Vehicle ID
        :param RoundState round_state: Round inputs
        """
        return tuple(
            t.collected_count
            for t in scenario.vehicle(vehicle_id).trajectories
        )

    def ranked_by(self, scenario, stats, label):
        """Return vehicle IDs sorted by descending statistic, then ID.

        :param Scenario scenario: Scenario
        :param dict stats: Statistic per vehicle ID
        :param str label: Statistic name for error messages
        """
        missing = [v for v in scenario.vehicle_ids if v not in stats]
        if missing:
            raise RoundStateError(
                "%s: missing %s for vehicles %s" % (self.name, label, missing)
            )
        return sorted(scenario.vehicle_ids, key=lambda v: (-stats[v], v))
