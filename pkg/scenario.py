"""World model: street blocks, vehicles with probabilistic trajectories and
system parameters.
"""
from dataclasses import dataclass, field, replace
import json
import logging
import math
import os

import jsonschema
import numpy as np

from divergence import ClassDistribution, normalized
from errors import ScenarioParseError, ScenarioValidationError
from timing import DETERMINISTIC, SOJOURN_KINDS, TRUNCATED_GAUSSIAN, \
    SojournModel


SCHEMA_VERSION = 1
SCHEMA_PATH = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), 'schemas',
    'sense4fl-scenario.json'
)

# tolerance for probability and weight sums
SUM_TOL = 1e-9

# default system parameters of vehicles, timing and learning
SYSTEM_DEFAULTS = {
    'model_bits': 5.904e8,
    'cycles_per_sample': 9.8304e7,
    'flops': 4.0e10,
    'min_rate_bps': 5.0e7,
    'wired_delay_s': 1.0,
    'deadline_s': 80.0,
    'local_steps': 2,
    'batch_size': 32,
    'lr': 0.001,
    'lipschitz': 0.01,
    # number of selected vehicles S
    'budget': 10
}


@dataclass(frozen=True)
class StreetBlock:
    id: int
    # expected object count per traversal
    avg_objects: float
    class_dist: ClassDistribution
    # importance factor, weights sum to 1 over the scenario
    weight: float


@dataclass(frozen=True)
class Trajectory:
    blocks: tuple
    prob: float
    # number of leading blocks already traversed at selection time
    collected_count: int
    sojourn: SojournModel

    @property
    def length(self):
        return len(self.blocks)


@dataclass(frozen=True)
class VehicleProfile:
    id: int
    trajectories: tuple
    flops: float = SYSTEM_DEFAULTS['flops']
    cycles_per_sample: float = SYSTEM_DEFAULTS['cycles_per_sample']
    min_rate_bps: float = SYSTEM_DEFAULTS['min_rate_bps']


@dataclass(frozen=True)
class TimingParams:
    deadline_s: float = SYSTEM_DEFAULTS['deadline_s']
    model_bits: float = SYSTEM_DEFAULTS['model_bits']
    wired_delay_s: float = SYSTEM_DEFAULTS['wired_delay_s']
    batch_size: int = SYSTEM_DEFAULTS['batch_size']
    local_steps: int = SYSTEM_DEFAULTS['local_steps']


@dataclass(frozen=True)
class LearningParams:
    lr: float = SYSTEM_DEFAULTS['lr']
    lipschitz: float = SYSTEM_DEFAULTS['lipschitz']


@dataclass(frozen=True)
class Scenario:
    """The world the optimizer decides over. Immutable after construction."""
    blocks: tuple
    vehicles: tuple
    timing: TimingParams
    learning: LearningParams
    budget: int

    _block_index: dict = field(
        default=None, init=False, repr=False, compare=False
    )
    _vehicle_index: dict = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(
            self, '_block_index', {b.id: b for b in self.blocks}
        )
        object.__setattr__(
            self, '_vehicle_index', {v.id: v for v in self.vehicles}
        )

    @property
    def num_classes(self):
        return len(self.blocks[0].class_dist)

    @property
    def vehicle_ids(self):
        return tuple(v.id for v in self.vehicles)

    def block(self, block_id):
        return self._block_index[block_id]

    def vehicle(self, vehicle_id):
        return self._vehicle_index[vehicle_id]

    def trajectory(self, vehicle_id, m):
        return self._vehicle_index[vehicle_id].trajectories[m]

    def restrict(self, vehicle_ids):
        """Return scenario with only the given vehicles available.

        The budget is capped at the number of remaining vehicles.

        :param iterable vehicle_ids: IDs of available vehicles
        """
        keep = set(vehicle_ids)
        vehicles = tuple(v for v in self.vehicles if v.id in keep)
        return replace(
            self, vehicles=vehicles, budget=min(self.budget, len(vehicles))
        )


# validation

def _fail(msg):
    raise ScenarioValidationError(msg)


def _fmt(value):
    return "%.12g" % value


def validate_scenario(scenario):
    """Check all scenario invariants.

    Raises ScenarioValidationError naming the first violated invariant.

    :param Scenario scenario: Scenario
    """
    if not scenario.blocks:
        _fail("scenario has no blocks")
    if not scenario.vehicles:
        _fail("scenario has no vehicles")

    num_classes = len(scenario.blocks[0].class_dist)
    block_ids = set()
    for block in scenario.blocks:
        if block.id in block_ids:
            _fail("block id %s is not unique" % block.id)
        block_ids.add(block.id)
        if block.id < 1:
            _fail("block %s: id must be >= 1" % block.id)
        if not block.avg_objects > 0:
            _fail("block %s: avg_objects must be > 0" % block.id)
        if not block.weight >= 0:
            _fail("block %s: weight must be >= 0" % block.id)
        probs = block.class_dist.probs
        if len(probs) != num_classes:
            _fail(
                "block %s: class_dist has %d classes, expected %d"
                % (block.id, len(probs), num_classes)
            )
        if min(probs) < 0:
            _fail("block %s: class_dist has negative entries" % block.id)
        total = math.fsum(probs)
        if abs(total - 1.0) > SUM_TOL:
            _fail("block %s class_dist sums to %s" % (block.id, _fmt(total)))

    total = math.fsum(b.weight for b in scenario.blocks)
    if abs(total - 1.0) > SUM_TOL:
        _fail("block weights sum to %s" % _fmt(total))

    vehicle_ids = set()
    for vehicle in scenario.vehicles:
        if vehicle.id in vehicle_ids:
            _fail("vehicle id %s is not unique" % vehicle.id)
        vehicle_ids.add(vehicle.id)
        if vehicle.id < 1:
            _fail("vehicle %s: id must be >= 1" % vehicle.id)
        for attr in ('flops', 'cycles_per_sample', 'min_rate_bps'):
            if not getattr(vehicle, attr) > 0:
                _fail("vehicle %s: %s must be > 0" % (vehicle.id, attr))
        if not vehicle.trajectories:
            _fail("vehicle %s has no trajectories" % vehicle.id)

        for m, trajectory in enumerate(vehicle.trajectories):
            prefix = "vehicle %s trajectory %d" % (vehicle.id, m)
            if not trajectory.blocks:
                _fail("%s is empty" % prefix)
            for block_id in trajectory.blocks:
                if block_id not in block_ids:
                    _fail("%s visits unknown block %s" % (prefix, block_id))
            if not 0 <= trajectory.prob <= 1:
                _fail("%s: prob %s outside [0, 1]"
                      % (prefix, _fmt(trajectory.prob)))
            if not 1 <= trajectory.collected_count <= trajectory.length:
                _fail(
                    "%s: collected_count %d outside [1, %d]"
                    % (prefix, trajectory.collected_count, trajectory.length)
                )
            sojourn = trajectory.sojourn
            if sojourn.dist not in SOJOURN_KINDS:
                _fail("%s: unknown sojourn dist '%s'" % (prefix, sojourn.dist))
            if (len(sojourn.mean_s) != trajectory.length
                    or len(sojourn.std_s) != trajectory.length):
                _fail("%s: sojourn needs one value per block" % prefix)
            if min(sojourn.mean_s) <= 0:
                _fail("%s: sojourn means must be > 0" % prefix)
            if min(sojourn.std_s) < 0:
                _fail("%s: sojourn stds must be >= 0" % prefix)
            if sojourn.dist == DETERMINISTIC and max(sojourn.std_s) != 0:
                _fail("%s: deterministic sojourn requires std 0" % prefix)

        total = math.fsum(t.prob for t in vehicle.trajectories)
        if abs(total - 1.0) > SUM_TOL:
            _fail("vehicle %s trajectory probs sum to %s"
                  % (vehicle.id, _fmt(total)))

    timing = scenario.timing
    for attr in ('deadline_s', 'model_bits', 'wired_delay_s', 'batch_size',
                 'local_steps'):
        if not getattr(timing, attr) > 0:
            _fail("timing %s must be > 0" % attr)
    if not scenario.learning.lr > 0:
        _fail("learning lr must be > 0")
    if not scenario.learning.lipschitz > 0:
        _fail("learning lipschitz must be > 0")
    if not 1 <= scenario.budget <= len(scenario.vehicles):
        _fail(
            "budget %d outside [1, %d vehicles]"
            % (scenario.budget, len(scenario.vehicles))
        )


def _renormalized(scenario):
    """Return scenario with every probability vector on the simplex."""
    blocks = tuple(
        replace(b, class_dist=ClassDistribution.from_array(b.class_dist.probs))
        for b in scenario.blocks
    )
    vehicles = []
    for vehicle in scenario.vehicles:
        probs = normalized([t.prob for t in vehicle.trajectories])
        trajectories = tuple(
            replace(t, prob=float(p))
            for t, p in zip(vehicle.trajectories, probs)
        )
        vehicles.append(replace(vehicle, trajectories=trajectories))
    return replace(scenario, blocks=blocks, vehicles=tuple(vehicles))


# JSON (de)serialization

def scenario_from_dict(doc):
    """Build and validate scenario from a decoded scenario document.

    :param dict doc: Decoded JSON document
    """
    with open(SCHEMA_PATH) as f:
        schema = json.load(f)
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(
        validator.iter_errors(doc), key=lambda e: list(e.absolute_path)
    )
    if errors:
        error = errors[0]
        location = '/'.join(str(p) for p in error.absolute_path) or '<root>'
        _fail("schema violation at %s: %s" % (location, error.message))

    blocks = tuple(
        StreetBlock(
            id=b['id'],
            avg_objects=float(b['avg_objects']),
            class_dist=ClassDistribution(
                tuple(float(p) for p in b['class_dist'])
            ),
            weight=float(b['weight'])
        )
        for b in doc['blocks']
    )
    vehicles = tuple(
        VehicleProfile(
            id=v['id'],
            trajectories=tuple(
                Trajectory(
                    blocks=tuple(t['blocks']),
                    prob=float(t['prob']),
                    collected_count=t['collected_count'],
                    sojourn=SojournModel(
                        mean_s=tuple(float(x) for x in t['sojourn']['mean_s']),
                        std_s=tuple(float(x) for x in t['sojourn']['std_s']),
                        dist=t['sojourn']['dist']
                    )
                )
                for t in v['trajectories']
            ),
            flops=float(v['flops']),
            cycles_per_sample=float(v['cycles_per_sample']),
            min_rate_bps=float(v['min_rate_bps'])
        )
        for v in doc['vehicles']
    )
    timing = doc['timing']
    learning = doc['learning']
    scenario = Scenario(
        blocks=blocks,
        vehicles=vehicles,
        timing=TimingParams(
            deadline_s=float(timing['deadline_s']),
            model_bits=float(timing['model_bits']),
            wired_delay_s=float(timing['wired_delay_s']),
            batch_size=timing['batch_size'],
            local_steps=timing['local_steps']
        ),
        learning=LearningParams(
            lr=float(learning['lr']), lipschitz=float(learning['lipschitz'])
        ),
        budget=doc['budget_s']
    )
    validate_scenario(scenario)
    return _renormalized(scenario)


def scenario_to_dict(scenario):
    """Return JSON-serializable document for a scenario.

    :param Scenario scenario: Scenario
    """
    return {
        'schema_version': SCHEMA_VERSION,
        'blocks': [
            {
                'id': b.id,
                'avg_objects': b.avg_objects,
                'class_dist': list(b.class_dist.probs),
                'weight': b.weight
            }
            for b in scenario.blocks
        ],
        'vehicles': [
            {
                'id': v.id,
                'flops': v.flops,
                'cycles_per_sample': v.cycles_per_sample,
                'min_rate_bps': v.min_rate_bps,
                'trajectories': [
                    {
                        'blocks': list(t.blocks),
                        'prob': t.prob,
                        'collected_count': t.collected_count,
                        'sojourn': {
                            'mean_s': list(t.sojourn.mean_s),
                            'std_s': list(t.sojourn.std_s),
                            'dist': t.sojourn.dist
                        }
                    }
                    for t in v.trajectories
                ]
            }
            for v in scenario.vehicles
        ],
        'timing': {
            'deadline_s': scenario.timing.deadline_s,
            'model_bits': scenario.timing.model_bits,
            'wired_delay_s': scenario.timing.wired_delay_s,
            'batch_size': scenario.timing.batch_size,
            'local_steps': scenario.timing.local_steps
        },
        'learning': {
            'lr': scenario.learning.lr,
            'lipschitz': scenario.learning.lipschitz
        },
        'budget_s': scenario.budget
    }


def load_scenario(path):
    """Load and validate scenario JSON file.

    :param str path: Scenario file path
    """
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, ValueError) as e:
        raise ScenarioParseError("could not read scenario %s: %s" % (path, e))
    return scenario_from_dict(doc)


def save_scenario(scenario, path):
    """Write scenario as JSON file.

    :param Scenario scenario: Scenario
    :param str path: Output file path
    """
    with open(path, 'w') as f:
        json.dump(scenario_to_dict(scenario), f, indent=2, sort_keys=True)
        f.write('\n')


# synthetic scenarios

@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic scenario.

    The generator uses numpy's PCG64 seeded with the given seed.
    """
    blocks: int
    vehicles: int
    classes: int
    max_trajectories: int
    max_blocks: int
    budget: int
    seed: int = 0
    dirichlet_alpha: float = 0.3
    speed_kmh: tuple = (50.0, 60.0)
    block_length_m: tuple = (150.0, 500.0)
    # std of sojourn times relative to their mean
    sojourn_cv: float = 0.1
    sojourn_dist: str = TRUNCATED_GAUSSIAN
    timing: TimingParams = TimingParams()
    learning: LearningParams = LearningParams()
    flops: float = SYSTEM_DEFAULTS['flops']
    cycles_per_sample: float = SYSTEM_DEFAULTS['cycles_per_sample']
    min_rate_bps: float = SYSTEM_DEFAULTS['min_rate_bps']


def _grid_neighbors(num_blocks):
    """Return 4-neighborhood of blocks laid out row-wise on a square grid."""
    cols = int(math.ceil(math.sqrt(num_blocks)))
    neighbors = []
    for i in range(num_blocks):
        row, col = divmod(i, cols)
        candidates = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            r, c = row + dr, col + dc
            j = r * cols + c
            if 0 <= r and 0 <= c < cols and j < num_blocks:
                candidates.append(j)
        neighbors.append(candidates)
    return neighbors


def _walk(start, steps, neighbors, rng):
    path = [start]
    for _ in range(steps):
        options = neighbors[path[-1]]
        path.append(int(rng.choice(options)) if options else path[-1])
    return path


def generate_synthetic(spec, logger=None):
    """Generate a random scenario on a street grid.

    Block class distributions are drawn from a symmetric Dirichlet, vehicle
    trajectories are random walks sharing the already traversed prefix.

    :param GeneratorSpec spec: Generator parameters
    :param Logger logger: Optional logger
    """
    logger = logger or logging.getLogger(__name__)
    for attr in ('blocks', 'vehicles', 'classes', 'max_trajectories',
                 'max_blocks', 'budget'):
        if getattr(spec, attr) < 1:
            _fail("generator %s must be >= 1" % attr)
    if spec.budget > spec.vehicles:
        _fail(
            "generator budget %d exceeds %d vehicles"
            % (spec.budget, spec.vehicles)
        )

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    neighbors = _grid_neighbors(spec.blocks)

    blocks = []
    lengths = []
    raw_weights = rng.uniform(0.5, 1.5, size=spec.blocks)
    weights = normalized(raw_weights)
    for i in range(spec.blocks):
        class_dist = rng.dirichlet([spec.dirichlet_alpha] * spec.classes)
        blocks.append(StreetBlock(
            id=i + 1,
            avg_objects=float(rng.uniform(50.0, 300.0)),
            class_dist=ClassDistribution.from_array(class_dist),
            weight=float(weights[i])
        ))
        lengths.append(float(rng.uniform(*spec.block_length_m)))

    vehicles = []
    for v in range(spec.vehicles):
        num_trajectories = int(rng.integers(1, spec.max_trajectories + 1))
        speed = float(rng.uniform(*spec.speed_kmh)) / 3.6
        collected = int(rng.integers(1, min(2, spec.max_blocks) + 1))
        start = int(rng.integers(spec.blocks))
        history = _walk(start, collected - 1, neighbors, rng)

        probs = normalized(rng.uniform(0.1, 1.0, size=num_trajectories))
        trajectories = []
        for m in range(num_trajectories):
            length = int(rng.integers(collected, spec.max_blocks + 1))
            path = history[:-1] + _walk(
                history[-1], length - collected, neighbors, rng
            )
            means = tuple(lengths[b] / speed for b in path)
            if spec.sojourn_dist == DETERMINISTIC:
                stds = tuple(0.0 for _ in path)
            else:
                stds = tuple(spec.sojourn_cv * mu for mu in means)
            trajectories.append(Trajectory(
                blocks=tuple(b + 1 for b in path),
                prob=float(probs[m]),
                collected_count=collected,
                sojourn=SojournModel(
                    mean_s=means, std_s=stds, dist=spec.sojourn_dist
                )
            ))
        vehicles.append(VehicleProfile(
            id=v + 1,
            trajectories=tuple(trajectories),
            flops=spec.flops,
            cycles_per_sample=spec.cycles_per_sample,
            min_rate_bps=spec.min_rate_bps
        ))

    scenario = Scenario(
        blocks=tuple(blocks),
        vehicles=tuple(vehicles),
        timing=spec.timing,
        learning=spec.learning,
        budget=spec.budget
    )
    validate_scenario(scenario)
    logger.debug(
        "generated scenario B=%d V=%d C=%d seed=%d"
        % (spec.blocks, spec.vehicles, spec.classes, spec.seed)
    )
    return scenario
