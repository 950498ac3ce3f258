from timing import ReceptionEstimator
from .strategy import Strategy


class UploadingCentricStrategy(Strategy):
    """Vehicles with the highest expected reception probability when
    stopping upon selection.
    """

    def __init__(self, config=None, logger=None):
        """Constructor

        :param OptimizerConfig config: Optimizer and timing config
        :param Logger logger: Application logger
        """
        super(UploadingCentricStrategy, self).__init__(
            'uploading_centric', config, logger
        )

    def upload_scores(self, scenario):
        """Return expected q_rcv at g = c per vehicle ID.

        :param Scenario scenario: Scenario
        """
        estimator = ReceptionEstimator(
            scenario, self.config.mc_config(), self.logger
        )
        return {
            v.id: sum(
                t.prob * estimator.q_rcv(v.id, m, t.collected_count)
                for m, t in enumerate(v.trajectories)
            )
            for v in scenario.vehicles
        }

    def rank(self, scenario, round_state):
        return self.ranked_by(
            scenario, self.upload_scores(scenario), 'upload scores'
        )


def uploading_centric(scenario, config=None):
    """Return decision of the S vehicles most likely to upload.

    :param Scenario scenario: Scenario
    :param OptimizerConfig config: Timing config
    """
    return UploadingCentricStrategy(config).select(scenario)
