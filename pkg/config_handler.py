import copy
import json
import os

import jsonschema

from errors import ConfigError
from flsim import SimConfig
from optimizer import OptimizerConfig
from scenario import SYSTEM_DEFAULTS, GeneratorSpec, LearningParams, TimingParams


SERVICE_NAME = 'sense4fl'
CONFIG_FILE = 'sense4flConfig.json'
SCHEMA_PATH = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), 'schemas', 'sense4fl.json'
)

# built-in defaults if no tenant config file exists
DEFAULT_CONFIG = {
    'timing_mode': 'monte_carlo',
    'mc_samples': 10000,
    'mc_seed': 0,
    'bisection_tol': 1e-6,
    'max_local_search_iters': 50,
    'exact_enum_limit': 256,
    'coordinate_sweeps': 5,
    'brute_force_limit': 10000000,
    'default_generator': {
        'blocks': 12,
        'vehicles': 20,
        'classes': 4,
        'max_trajectories': 2,
        'max_blocks': 4,
        'dirichlet_alpha': 0.3
    },
    'system': dict(SYSTEM_DEFAULTS),
    'sim': {
        'rounds': 50,
        'feature_dim': 16,
        'class_sep': 1.0,
        'noise_std': 1.0,
        'pool_size': 2000,
        'eval_size': 2000,
        'lr': 0.5,
        'availability': 1.0
    }
}


class ConfigHandler:
    """Tenant config of the sense4fl service

    Layers built-in defaults, the tenant config file
    $CONFIG_PATH/<tenant>/sense4flConfig.json and SENSE4FL_* environment
    overrides.
    """

    def __init__(self, tenant, logger, config_path='config', overrides=None):
        """Constructor

        :param str tenant: Tenant name
        :param Logger logger: Application logger
        :param str config_path: Base dir of tenant configs
        :param dict overrides: Config values from the environment, with
                               upper case keys
        """
        self.tenant = tenant
        self.logger = logger
        self.path = os.path.join(config_path, tenant, CONFIG_FILE)

        self._config = copy.deepcopy(DEFAULT_CONFIG)
        try:
            with open(self.path) as f:
                doc = json.load(f)
            self.validate(doc)
            self._merge(self._config, doc.get('config', {}))
            self.logger.debug("loaded config from %s" % self.path)
        except FileNotFoundError:
            self.logger.info(
                "config file %s not found, using built-in defaults"
                % self.path
            )
        except (ValueError, ConfigError) as e:
            self.logger.error(
                "failed to load config file %s\n%s" % (self.path, e)
            )
            raise ConfigError("invalid config file %s: %s" % (self.path, e))

        for key, value in (overrides or {}).items():
            key = key.lower()
            if key not in DEFAULT_CONFIG:
                continue
            if isinstance(self._config[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError("override %s must be an object" % key)
                self._merge(self._config[key], value)
            else:
                self._config[key] = value
            self.logger.debug("config %s overridden from environment" % key)

    @staticmethod
    def _merge(target, values):
        for key, value in values.items():
            if isinstance(value, dict) and isinstance(target.get(key), dict):
                target[key].update(value)
            else:
                target[key] = value

    @staticmethod
    def validate(doc):
        """Validate config document against the service schema.

        :param dict doc: Config document
        """
        with open(SCHEMA_PATH) as f:
            schema = json.load(f)
        try:
            jsonschema.validate(doc, schema)
        except jsonschema.ValidationError as e:
            raise ConfigError(e.message)

    def config(self):
        return self._config

    def optimizer_config(self, **overrides):
        """Return optimizer config, flags override config values.

        :param overrides: OptimizerConfig fields, None values are ignored
        """
        config = self._config
        values = {
            'bisection_tol': config['bisection_tol'],
            'max_local_search_iters': config['max_local_search_iters'],
            'timing_mode': config['timing_mode'],
            'mc_samples': config['mc_samples'],
            'seed': config['mc_seed'],
            'exact_enum_limit': config['exact_enum_limit'],
            'coordinate_sweeps': config['coordinate_sweeps'],
            'brute_force_limit': int(config['brute_force_limit'])
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return OptimizerConfig(**values)
        except ValueError as e:
            raise ConfigError(str(e))

    def timing_params(self):
        system = self._config['system']
        return TimingParams(
            deadline_s=system['deadline_s'],
            model_bits=system['model_bits'],
            wired_delay_s=system['wired_delay_s'],
            batch_size=system['batch_size'],
            local_steps=system['local_steps']
        )

    def learning_params(self):
        system = self._config['system']
        return LearningParams(lr=system['lr'], lipschitz=system['lipschitz'])

    def generator_spec(self, **overrides):
        """Return generator spec with the default system parameters.

        :param overrides: GeneratorSpec fields, None values are ignored
        """
        system = self._config['system']
        values = {'budget': system['budget']}
        values.update(self._config['default_generator'])
        values.update({
            'timing': self.timing_params(),
            'learning': self.learning_params(),
            'flops': system['flops'],
            'cycles_per_sample': system['cycles_per_sample'],
            'min_rate_bps': system['min_rate_bps']
        })
        values.update({k: v for k, v in overrides.items() if v is not None})
        return GeneratorSpec(**values)

    def sim_config(self, **overrides):
        """Return simulation config.

        :param overrides: SimConfig fields, None values are ignored
        """
        values = dict(self._config['sim'])
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return SimConfig(**values)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e))
