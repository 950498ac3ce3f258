from .strategy import RoundState, Strategy
from .sense4fl import Sense4FLStrategy
from .random_strategy import RandomStrategy, random_select
from .uploading_centric import UploadingCentricStrategy, uploading_centric
from .coverage_centric import CoverageCentricStrategy, coverage_centric, \
    expected_coverage
from .gradient_based import GradientBasedStrategy, gradient_based
from .power_of_choice import PowerOfChoiceStrategy, power_of_choice
from .ablation import AblationStrategy, full_data, selection_only


# training mode without vehicle selection, handled by the simulator
CENTRALIZED = 'centralized'

STRATEGIES = {
    'sense4fl': Sense4FLStrategy,
    'random': RandomStrategy,
    'uploading_centric': UploadingCentricStrategy,
    'coverage_centric': CoverageCentricStrategy,
    'gradient_based': GradientBasedStrategy,
    'power_of_choice': PowerOfChoiceStrategy
}

ABLATIONS = {
    'full_data': full_data,
    'selection_only': selection_only
}

STRATEGY_NAMES = tuple(STRATEGIES) + tuple(ABLATIONS) + (CENTRALIZED,)


def create_strategy(name, config=None, logger=None):
    """Return strategy by name.

    Ablations wrap the optimizer's selection.

    :param str name: Strategy name
    :param OptimizerConfig config: Optimizer and timing config
    :param Logger logger: Application logger
    """
    if name in STRATEGIES:
        return STRATEGIES[name](config, logger)
    if name in ABLATIONS:
        return AblationStrategy(
            name, Sense4FLStrategy(config, logger), ABLATIONS[name], logger
        )
    raise ValueError("unknown strategy '%s'" % name)
