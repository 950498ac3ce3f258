"""Command line interface of the vehicle selection pipeline.

Run with `flask --app cli <command>` or `python cli.py <command>`.
"""
from dataclasses import replace
import functools
import json
import logging
import os
import sys

import click
from flask import Config, Flask, current_app, render_template
from flask.cli import FlaskGroup
import pandas as pd

from config_handler import ConfigHandler
from errors import ConfigError, IneligibleVehicleError, \
    InfeasibleScenarioError, InvalidStopError, InvariantViolationError, \
    ScenarioParseError, ScenarioValidationError
from flsim import CSV_COLUMNS, Simulator, load_model, logs_to_frame, \
    save_model, summarize
from objective import BoundParams, convergence_bound
from optimizer import Optimizer
from scenario import generate_synthetic, load_scenario, save_scenario, \
    validate_scenario
from strategies import STRATEGY_NAMES


EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_INVARIANT = 4

ERROR_EXIT_CODES = (
    ((ScenarioParseError, ScenarioValidationError, ConfigError,
      InvalidStopError), EXIT_VALIDATION),
    ((InfeasibleScenarioError, IneligibleVehicleError), EXIT_INFEASIBLE),
    ((InvariantViolationError,), EXIT_INVARIANT)
)

SUMMARY_COLUMNS = ['strategy', 'final_acc', 'omega', 'uploads']
ORACLE_COLUMNS = [
    'trial', 'seed', 'obj_dagger', 'obj_star', 'ratio', 'bound', 'd_dagger',
    'client_star', 'step1_ok', 'bound_ok'
]
SWEEP_PARAMETERS = ('vehicles', 'min_rate', 'flops')
# slack for float arithmetic in oracle checks
ORACLE_SLACK = 1e-9


def i18n(value, locale=None):
    """Lookup string in translations.

    Usage:
        Python: i18n('example.path_to.string')
        Jinja2 filter for templates: 'example.path_to.string' | i18n

    :param str value: Dot-separated path to translation string
    :param str locale: Override locale (optional)
    """
    translations = current_app.extensions['sense4fl_translations']
    locale = locale or current_app.config['DEFAULT_LOCALE']
    # traverse translations dict for locale
    lookup = translations.get(locale, {})
    for part in value.split('.'):
        if isinstance(lookup, dict):
            # get next lookup level
            lookup = lookup.get(part)
        else:
            # lookup level too deep
            lookup = None
        if lookup is None:
            # return input value if not found
            lookup = value
            break

    return lookup


def create_app(test_config=None):
    """Return Flask application carrying config, logger and templates.

    :param dict test_config: Config values overriding the environment
    """
    app = Flask(__name__)
    app.config.from_mapping(
        CONFIG_PATH=os.environ.get('CONFIG_PATH', 'config'),
        TENANT=os.environ.get('TENANT', 'default'),
        DEFAULT_LOCALE=os.environ.get('DEFAULT_LOCALE', 'en'),
        SENSE4FL_OVERRIDES=None
    )
    if test_config:
        app.config.update(test_config)
    app.logger.setLevel(logging.INFO)

    overrides = app.config['SENSE4FL_OVERRIDES']
    if overrides is None:
        env = Config(app.root_path)
        env.from_prefixed_env('SENSE4FL')
        overrides = dict(env)
    app.extensions['sense4fl'] = ConfigHandler(
        app.config['TENANT'], app.logger, app.config['CONFIG_PATH'],
        overrides
    )

    # load translation strings
    translations = {}
    locale = app.config['DEFAULT_LOCALE']
    path = os.path.join(app.root_path, 'translations/%s.json' % locale)
    try:
        with open(path, 'r') as f:
            translations[locale] = json.load(f)
    except Exception as e:
        app.logger.error(
            "Failed to load translation strings for locale '%s' from %s\n%s"
            % (locale, path, e)
        )
    app.extensions['sense4fl_translations'] = translations
    app.add_template_filter(i18n, 'i18n')

    return app


cli = FlaskGroup(
    create_app=create_app, add_default_commands=False,
    help="Trajectory-aware vehicle selection for federated learning."
)


def handler():
    return current_app.extensions['sense4fl']


def command(name, **kwargs):
    """Register a subcommand that maps package errors to exit codes and
    takes a --verbose flag.
    """
    def decorator(func):
        @cli.command(name, **kwargs)
        @click.option('--verbose', is_flag=True, help="Log debug messages.")
        @functools.wraps(func)
        def wrapper(verbose, **params):
            logger = current_app.logger
            if verbose:
                logger.setLevel(logging.DEBUG)
            try:
                return func(**params)
            except Exception as e:
                for errors, code in ERROR_EXIT_CODES:
                    if isinstance(e, errors):
                        logger.error("%s: %s" % (name, e))
                        click.echo("Error: %s" % e, err=True)
                        sys.exit(code)
                raise
        return wrapper
    return decorator


def scenario_overrides(func):
    """Options overriding scenario file fields."""
    options = [
        click.option('--budget', type=int, help="Number of vehicles S."),
        click.option('--local-steps', type=int,
                     help="Local SGD steps T per round."),
        click.option('--lr', 'learning_rate', type=float,
                     help="Learning rate entering delta."),
        click.option('--deadline', type=float,
                     help="Round deadline in seconds.")
    ]
    for option in reversed(options):
        func = option(func)
    return func


def optimizer_options(func):
    options = [
        click.option('--timing-mode',
                     type=click.Choice(['deterministic', 'monte_carlo']),
                     help="Reception probability evaluation."),
        click.option('--mc-samples', type=int,
                     help="Monte Carlo samples per trajectory.")
    ]
    for option in reversed(options):
        func = option(func)
    return func


def generator_options(func):
    options = [
        click.option('--blocks', type=int, help="Number of blocks B."),
        click.option('--vehicles', type=int, help="Number of vehicles V."),
        click.option('--classes', type=int, help="Number of classes C."),
        click.option('--max-trajectories', type=int,
                     help="Max trajectories per vehicle."),
        click.option('--max-blocks', type=int,
                     help="Max blocks per trajectory."),
        click.option('--budget', type=int, help="Number of vehicles S."),
        click.option('--dirichlet-alpha', type=float,
                     help="Concentration of block class distributions."),
        click.option('--local-steps', type=int,
                     help="Local SGD steps T per round.")
    ]
    for option in reversed(options):
        func = option(func)
    return func


def load_with_overrides(path, budget=None, local_steps=None,
                        learning_rate=None, deadline=None):
    """Load scenario, flags take precedence over file values."""
    scenario = load_scenario(path)
    timing = scenario.timing
    if local_steps is not None:
        timing = replace(timing, local_steps=local_steps)
    if deadline is not None:
        timing = replace(timing, deadline_s=deadline)
    learning = scenario.learning
    if learning_rate is not None:
        learning = replace(learning, lr=learning_rate)
    scenario = replace(
        scenario, timing=timing, learning=learning,
        budget=scenario.budget if budget is None else budget
    )
    validate_scenario(scenario)
    return scenario


def generator_spec(seed, local_steps=None, **params):
    spec = handler().generator_spec(seed=seed, **params)
    if local_steps is not None:
        spec = replace(spec, timing=replace(spec.timing, local_steps=local_steps))
    return spec


def parse_bound(text):
    """Parse 'beta=1,L=1,eps=1,phi=1,U=1,K=10' into BoundParams."""
    values = {}
    for item in text.split(','):
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigError("invalid bound parameter '%s'" % item)
        values[key.strip()] = value.strip()
    try:
        return BoundParams(
            beta=float(values['beta']), L=float(values['L']),
            eps=float(values['eps']), phi=float(values['phi']),
            U=float(values['U']), K=int(values['K'])
        )
    except (KeyError, ValueError) as e:
        raise ConfigError("invalid bound parameters '%s': %s" % (text, e))


def write_output(text, output):
    if output:
        with open(output, 'w') as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


def split_names(values):
    names = []
    for value in values:
        names.extend(n.strip() for n in value.split(',') if n.strip())
    for name in names:
        if name not in STRATEGY_NAMES:
            raise click.BadParameter(
                "unknown strategy '%s', choose from %s"
                % (name, ', '.join(STRATEGY_NAMES))
            )
    return names


@command('optimize')
@click.argument('scenario_path', type=click.Path())
@click.option('--output', '-o', type=click.Path(),
              help="Selection JSON file (default: stdout).")
@click.option('--explain', is_flag=True,
              help="Print a human-readable explanation.")
@click.option('--bound', 'bound_text',
              help="Evaluate the convergence bound, e.g. "
                   "beta=1,L=1,eps=1,phi=1,U=1,K=10.")
@click.option('--seed', type=int, help="Seed of Monte Carlo draws.")
@scenario_overrides
@optimizer_options
def optimize(scenario_path, output, explain, bound_text, timing_mode,
             mc_samples, seed, **overrides):
    """Select vehicles and stops for one round.

    Writes selected IDs, stops, d_dagger, the objective breakdown and the
    swap log as JSON.
    """
    scenario = load_with_overrides(scenario_path, **overrides)
    config = handler().optimizer_config(
        timing_mode=timing_mode, mc_samples=mc_samples, seed=seed
    )
    selection = Optimizer(scenario, config, current_app.logger).solve()
    doc = selection.to_dict()
    if bound_text:
        params = parse_bound(bound_text)
        doc['bound'] = convergence_bound(
            [selection.breakdown.omega] * params.K, params, scenario.timing,
            scenario.learning
        ).to_dict()
    write_output(json.dumps(doc, indent=2, sort_keys=True) + '\n', output)

    if explain:
        text = render_template('optimize/explanation.txt', selection=selection)
        click.echo(text, err=not output)


def run_seeds(scenario, strategy, sim_config, optimizer_config, seed, seeds,
              initial_model=None):
    """Return (round logs of all seeds, final model of the last seed)."""
    simulator = Simulator(
        scenario, strategy, sim_config, optimizer_config, current_app.logger
    )
    logs = []
    model = None
    for i in range(seeds):
        seed_logs, model = simulator.run(seed + i, initial_model)
        logs.extend(seed_logs)
    return logs, model


@command('simulate')
@click.argument('scenario_path', type=click.Path())
@click.option('--strategy', default='sense4fl', show_default=True,
              type=click.Choice(STRATEGY_NAMES))
@click.option('--rounds', type=int, help="Training rounds K.")
@click.option('--seeds', default=1, show_default=True, type=int,
              help="Number of seeds, starting at --seed.")
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--output', '-o', type=click.Path(),
              help="CSV file (default: stdout).")
@click.option('--availability', type=float,
              help="Probability that a vehicle is available per round.")
@click.option('--sim-lr', type=float, help="Learning rate of the toy model.")
@click.option('--init-model', type=click.Path(),
              help="Start from a saved model (.npy).")
@click.option('--save-model', 'save_model_path', type=click.Path(),
              help="Save final model of the last seed (.npy).")
@scenario_overrides
@optimizer_options
def simulate(scenario_path, strategy, rounds, seeds, seed, output,
             availability, sim_lr, init_model, save_model_path, timing_mode,
             mc_samples, **overrides):
    """Run federated training and write one CSV row per round and seed.

    Columns: round, strategy, seed, omega, uploads, test_acc, test_loss,
    train_loss.
    """
    scenario = load_with_overrides(scenario_path, **overrides)
    sim_config = handler().sim_config(
        rounds=rounds, availability=availability, lr=sim_lr
    )
    optimizer_config = handler().optimizer_config(
        timing_mode=timing_mode, mc_samples=mc_samples
    )
    initial_model = load_model(init_model) if init_model else None
    logs, model = run_seeds(
        scenario, strategy, sim_config, optimizer_config, seed, seeds,
        initial_model
    )
    frame = logs_to_frame(logs)
    write_output(frame.to_csv(index=False, columns=CSV_COLUMNS), output)
    if save_model_path and model is not None:
        save_model(model, save_model_path)


@command('compare')
@click.argument('scenario_path', type=click.Path())
@click.option('--strategies', multiple=True,
              default=('sense4fl', 'random', 'uploading_centric',
                       'coverage_centric', 'centralized'),
              show_default=True, help="Strategy names, comma separated.")
@click.option('--rounds', type=int, help="Training rounds K.")
@click.option('--seeds', default=1, show_default=True, type=int)
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--output', '-o', type=click.Path(),
              help="Summary CSV file (default: stdout).")
@click.option('--logs', 'logs_path', type=click.Path(),
              help="Also write all round logs as CSV.")
@scenario_overrides
@optimizer_options
def compare(scenario_path, strategies, rounds, seeds, seed, output, logs_path,
            timing_mode=None, mc_samples=None, **overrides):
    """Compare strategies by mean final accuracy, omega and uploads.

    Columns: strategy, final_acc, omega, uploads.
    """
    scenario = load_with_overrides(scenario_path, **overrides)
    sim_config = handler().sim_config(rounds=rounds)
    optimizer_config = handler().optimizer_config(
        timing_mode=timing_mode, mc_samples=mc_samples
    )
    logs = []
    for strategy in split_names(strategies):
        logs.extend(run_seeds(
            scenario, strategy, sim_config, optimizer_config, seed, seeds
        )[0])
    frame = logs_to_frame(logs)
    if logs_path:
        frame.to_csv(logs_path, index=False, columns=CSV_COLUMNS)
    summary = summarize(frame)
    write_output(
        summary.to_csv(index=False, columns=SUMMARY_COLUMNS), output
    )


@command('oracle')
@click.option('--trials', default=100, show_default=True, type=int)
@click.option('--seed', default=0, show_default=True, type=int,
              help="Seed of the first instance.")
@click.option('--output', '-o', type=click.Path(),
              help="Report CSV file (default: stdout).")
@click.option('--dump-dir', default='.', show_default=True,
              type=click.Path(), help="Directory for violating instances.")
@click.option('--timing-mode',
              type=click.Choice(['deterministic', 'monte_carlo']))
@click.option('--mc-samples', type=int)
@generator_options
def oracle(trials, seed, output, dump_dir, timing_mode, mc_samples,
           **generator):
    """Check step 1 optimality and the approximation ratio against
    exhaustive enumeration on random instances.

    Columns: trial, seed, obj_dagger, obj_star, ratio, bound, d_dagger,
    client_star, step1_ok, bound_ok. Exits with 4 on a violation and dumps
    the instance.
    """
    config = handler().optimizer_config(
        timing_mode=timing_mode, mc_samples=mc_samples
    )
    logger = current_app.logger
    rows = []
    violations = []
    for trial in range(trials):
        spec = generator_spec(seed + trial, **generator)
        scenario = generate_synthetic(spec, logger)
        optimizer = Optimizer(scenario, config, logger)
        selection = optimizer.solve()
        obj_star, _ = optimizer.brute_force('omega')
        client_star, _ = optimizer.brute_force('client')

        obj_dagger = selection.breakdown.omega
        factor = optimizer.delta
        tol = config.bisection_tol
        if factor > 0:
            bound = (1 + factor) / factor
            bound_ok = obj_dagger <= bound * (obj_star + tol) + ORACLE_SLACK
        else:
            bound = float('inf')
            bound_ok = True
        step1_ok = abs(selection.d_dagger - client_star) <= tol + ORACLE_SLACK
        if factor == 0:
            # client objective vanishes, step 1 ran with a surrogate delta
            step1_ok = True
        ratio = obj_dagger / obj_star if obj_star > 0 else float('nan')
        rows.append({
            'trial': trial, 'seed': spec.seed, 'obj_dagger': obj_dagger,
            'obj_star': obj_star, 'ratio': ratio, 'bound': bound,
            'd_dagger': selection.d_dagger, 'client_star': client_star,
            'step1_ok': step1_ok, 'bound_ok': bound_ok
        })
        if not (step1_ok and bound_ok):
            path = os.path.join(
                dump_dir, 'oracle_violation_seed%d.json' % spec.seed
            )
            save_scenario(scenario, path)
            logger.error(
                "trial %d violates the oracle check, instance saved to %s"
                % (trial, path)
            )
            violations.append(trial)

    frame = pd.DataFrame(rows, columns=ORACLE_COLUMNS)
    write_output(frame.to_csv(index=False), output)
    if violations:
        raise InvariantViolationError(
            "oracle check failed in trials %s" % violations
        )


@command('gen')
@click.argument('output', type=click.Path())
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--speed-kmh', nargs=2, type=float,
              help="Vehicle speed range in km/h.")
@generator_options
def gen(output, seed, speed_kmh, **generator):
    """Write a synthetic scenario JSON file."""
    spec = generator_spec(seed, **generator)
    if speed_kmh:
        spec = replace(spec, speed_kmh=tuple(speed_kmh))
    scenario = generate_synthetic(spec, current_app.logger)
    save_scenario(scenario, output)
    current_app.logger.info(
        "wrote scenario with %d blocks and %d vehicles to %s"
        % (len(scenario.blocks), len(scenario.vehicles), output)
    )


def sweep_scenario(scenario, parameter, value):
    """Return scenario with one system parameter changed."""
    if parameter == 'vehicles':
        count = int(value)
        return scenario.restrict(scenario.vehicle_ids[:count])
    field_name = 'min_rate_bps' if parameter == 'min_rate' else 'flops'
    vehicles = tuple(
        replace(v, **{field_name: value}) for v in scenario.vehicles
    )
    return replace(scenario, vehicles=vehicles)


@command('sweep')
@click.argument('scenario_path', type=click.Path())
@click.option('--parameter', required=True,
              type=click.Choice(SWEEP_PARAMETERS))
@click.option('--values', 'values_text', required=True,
              help="Comma separated parameter values.")
@click.option('--strategies', multiple=True,
              default=('sense4fl', 'random'), show_default=True)
@click.option('--rounds', type=int, help="Training rounds K.")
@click.option('--seeds', default=1, show_default=True, type=int)
@click.option('--seed', default=0, show_default=True, type=int)
@click.option('--output', '-o', type=click.Path(),
              help="CSV file (default: stdout).")
@scenario_overrides
@optimizer_options
def sweep(scenario_path, parameter, values_text, strategies, rounds, seeds,
          seed, output, timing_mode=None, mc_samples=None, **overrides):
    """Compare strategies while varying the number of available vehicles,
    the uplink rate or the computing capability.

    Columns: parameter, value, strategy, final_acc, omega, uploads.
    """
    base = load_with_overrides(scenario_path, **overrides)
    sim_config = handler().sim_config(rounds=rounds)
    optimizer_config = handler().optimizer_config(
        timing_mode=timing_mode, mc_samples=mc_samples
    )
    try:
        values = [float(v) for v in values_text.split(',')]
    except ValueError:
        raise click.BadParameter("values must be numbers")

    frames = []
    for value in values:
        scenario = sweep_scenario(base, parameter, value)
        validate_scenario(scenario)
        logs = []
        for strategy in split_names(strategies):
            logs.extend(run_seeds(
                scenario, strategy, sim_config, optimizer_config, seed, seeds
            )[0])
        summary = summarize(logs_to_frame(logs))
        summary.insert(0, 'value', value)
        summary.insert(0, 'parameter', parameter)
        frames.append(summary)
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=['parameter', 'value'] + SUMMARY_COLUMNS
    )
    write_output(frame.to_csv(index=False), output)


if __name__ == '__main__':
    cli()
