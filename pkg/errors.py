class Sense4FLError(Exception):
    """Base class for all errors raised by this package"""
    pass


class ScenarioParseError(Sense4FLError):
    """Scenario file could not be read or is not valid JSON"""
    pass


class ScenarioValidationError(Sense4FLError):
    """Scenario content violates the schema or a scenario invariant.

    The message names the first violated invariant.
    """
    pass


class InfeasibleScenarioError(Sense4FLError):
    """Scenario has fewer eligible vehicles than the selection budget"""
    pass


class IneligibleVehicleError(Sense4FLError):
    """Every trajectory of a vehicle has zero reception-weighted
    probability, so its trajectory mixing weights are undefined.
    """

    def __init__(self, vehicle_id, msg=None):
        """Constructor

        :param int vehicle_id: Vehicle ID
        :param str msg: Optional message
        """
        self.vehicle_id = vehicle_id
        super(IneligibleVehicleError, self).__init__(
            msg or "vehicle %s is ineligible: no trajectory can upload "
            "before the deadline" % vehicle_id
        )


class InvalidStopError(Sense4FLError):
    """Stop count outside [c, N] or trajectory index out of range"""
    pass


class InstanceTooLargeError(Sense4FLError):
    """Instance exceeds the enumeration guard of the brute-force oracle"""
    pass


class ZeroWeightError(Sense4FLError):
    """All aggregation weights of the selected vehicles are zero"""
    pass


class EmptyDatasetError(Sense4FLError):
    """Local training was requested on an empty dataset"""
    pass


class InvariantViolationError(Sense4FLError):
    """An approximation or optimality guarantee failed on an instance"""
    pass


class DistributionLengthError(Sense4FLError, ValueError):
    """Class distributions of different length were compared"""
    pass


class RoundStateError(Sense4FLError):
    """Per-vehicle round statistics required by a strategy are missing"""
    pass


class ConfigError(Sense4FLError):
    """Service config file does not match its schema"""
    pass
