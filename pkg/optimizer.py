"""Vehicle selection and data collection optimizer.

Step 1 bisects over the fractional client divergence subproblem, step 2
refines the selection by single swaps on the full objective. An exhaustive
oracle is provided for validation on small instances.
"""
from dataclasses import dataclass, field
import itertools
import logging
import math

import numpy as np

from divergence import target_distribution
from errors import InfeasibleScenarioError, IneligibleVehicleError, \
    InstanceTooLargeError
from objective import Decision, VehicleTable, omega, scenario_delta
from timing import MONTE_CARLO, TIMING_MODES, McConfig, ReceptionEstimator


# minimal omega improvement for a swap to be accepted
SWAP_MARGIN = 1e-12

OBJECTIVES = ('omega', 'client')


@dataclass(frozen=True)
class OptimizerConfig:
    bisection_tol: float = 1e-6
    max_local_search_iters: int = 50
    timing_mode: str = MONTE_CARLO
    mc_samples: int = 10000
    seed: int = 0
    # stop vectors per vehicle up to which g is optimized exhaustively
    exact_enum_limit: int = 256
    coordinate_sweeps: int = 5
    brute_force_limit: int = 10 ** 7

    def __post_init__(self):
        if not self.bisection_tol > 0:
            raise ValueError("bisection_tol must be > 0")
        if self.max_local_search_iters < 1:
            raise ValueError("max_local_search_iters must be >= 1")
        if self.timing_mode not in TIMING_MODES:
            raise ValueError("unknown timing mode '%s'" % self.timing_mode)
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")

    def mc_config(self):
        return McConfig(
            mode=self.timing_mode, samples=self.mc_samples, seed=self.seed
        )


@dataclass(frozen=True)
class SwapRecord:
    removed: int
    inserted: int
    omega: float


@dataclass(frozen=True)
class Selection:
    decision: Decision
    breakdown: object
    # step 1 optimum of the fractional client divergence subproblem
    d_dagger: float
    iters_used: int = 0
    swap_log: tuple = ()
    delta_zero_branch: bool = False
    heuristic_vehicles: tuple = ()
    ineligible: tuple = ()

    def to_dict(self):
        doc = self.decision.to_dict()
        doc.update({
            'd_dagger': self.d_dagger,
            'breakdown': self.breakdown.to_dict(),
            'iters_used': self.iters_used,
            'swap_log': [
                {'removed': s.removed, 'inserted': s.inserted,
                 'omega': s.omega}
                for s in self.swap_log
            ],
            'notes': {
                'delta_zero_branch': self.delta_zero_branch,
                'heuristic_vehicles': list(self.heuristic_vehicles),
                'ineligible': list(self.ineligible)
            }
        })
        return doc


class Optimizer:
    """Solver for one scenario.

    Reception curves and per-vehicle tables are computed once and shared by
    all steps, so the objective is a fixed function during a solve.
    """

    def __init__(self, scenario, config=None, logger=None):
        """Constructor

        :param Scenario scenario: Scenario
        :param OptimizerConfig config: Optimizer config
        :param Logger logger: Application logger
        """
        self.scenario = scenario
        self.config = config or OptimizerConfig()
        self.logger = logger or logging.getLogger(__name__)
        self.estimator = ReceptionEstimator(
            scenario, self.config.mc_config(), self.logger
        )
        self.target = target_distribution(scenario).array
        self.delta = scenario_delta(scenario)
        self._tables = {}
        self._eligible = None

    def table(self, vehicle_id):
        """Return lookup table of a vehicle.

        :param int vehicle_id: Vehicle ID
        """
        if vehicle_id not in self._tables:
            table = VehicleTable(
                self.scenario, vehicle_id, self.estimator, self.target,
                self.config.exact_enum_limit
            )
            if not table.exact:
                self.logger.info(
                    "vehicle %s has %d stop vectors, using coordinate "
                    "descent" % (vehicle_id, table.num_combos)
                )
            self._tables[vehicle_id] = table
        return self._tables[vehicle_id]

    def eligibility(self):
        """Return (eligible, ineligible) vehicle IDs in scenario order."""
        if self._eligible is None:
            eligible = []
            ineligible = []
            for vehicle_id in self.scenario.vehicle_ids:
                if self.table(vehicle_id).eligible:
                    eligible.append(vehicle_id)
                else:
                    self.logger.warning(
                        "vehicle %s is ineligible: no trajectory can upload "
                        "before the deadline" % vehicle_id
                    )
                    ineligible.append(vehicle_id)
            self._eligible = (tuple(sorted(eligible)), tuple(ineligible))
        return self._eligible

    def _require_eligible(self):
        eligible, ineligible = self.eligibility()
        budget = self.scenario.budget
        if len(eligible) < budget:
            raise InfeasibleScenarioError(
                "only %d eligible vehicles for budget %d (ineligible: %s)"
                % (len(eligible), budget, list(ineligible))
            )
        return eligible

    def _heuristic_vehicles(self):
        return tuple(
            v for v in self.eligibility()[0] if not self.table(v).exact
        )

    def _minimize(self, table, score):
        """Return (offsets, value) of the stop vector minimizing score.

        Ties resolve to the lexicographically smallest stop vector.

        :param VehicleTable table: Vehicle table
        :param func score: Maps (rho, d_tilde, mix, eligible) to values
        """
        if table.exact:
            values = score(*table.all_terms)
            k = int(np.argmin(values))
            return table.combos[k], float(values[k])

        num_trajectories = len(table.sizes)
        current = np.zeros(num_trajectories, dtype=int)
        best = float(score(*table.terms(current[None, :]))[0])
        for sweep in range(self.config.coordinate_sweeps):
            changed = False
            for m in range(num_trajectories):
                candidates = np.tile(current, (table.sizes[m], 1))
                candidates[:, m] = np.arange(table.sizes[m])
                values = score(*table.terms(candidates))
                k = int(np.argmin(values))
                if values[k] < best:
                    current = candidates[k]
                    best = float(values[k])
                    changed = True
            if not changed:
                break
        return current, best

    @staticmethod
    def _metric_score(d, delta_eff):
        def score(rho_, d_tilde, mix, eligible):
            return np.where(eligible, rho_ * (delta_eff * d_tilde - d), np.inf)
        return score

    def _omega_score(self, base_rho, base_div, base_mix):
        """Return score of the objective after adding one vehicle to a base
        set given by its weighted sums.
        """
        factor = self.delta
        target = self.target

        def score(rho_, d_tilde, mix, eligible):
            total = base_rho + rho_
            with np.errstate(divide='ignore', invalid='ignore'):
                client = (base_div + rho_ * d_tilde) / total
                mixed = (base_mix + rho_[:, None] * mix) / total[:, None]
                values = factor * client + np.abs(mixed - target).sum(axis=1)
            return np.where(eligible & (total > 0), values, np.inf)
        return score

    def _delta_eff(self):
        return self.delta if self.delta > 0 else 1.0

    def optimize_g_for_metric(self, vehicle_id, d, delta_eff=None):
        """Return (stops, metric) minimizing rho_v * (delta * d_tilde_v - d).

        :param int vehicle_id: Vehicle ID
        :param float d: Bisection parameter
        :param float delta_eff: Drift factor (default: scenario delta, or 1
                                if that is zero)
        """
        table = self.table(vehicle_id)
        if not table.eligible:
            raise IneligibleVehicleError(vehicle_id)
        if delta_eff is None:
            delta_eff = self._delta_eff()
        offsets, value = self._minimize(
            table, self._metric_score(d, delta_eff)
        )
        return table.stops(offsets), value

    def _probe(self, eligible, d, delta_eff):
        """Return (feasible, picks) for bisection parameter d.

        picks are the first S (metric, vehicle ID, stops, rho) in ascending
        (metric, vehicle ID) order.
        """
        score = self._metric_score(d, delta_eff)
        ranked = []
        for vehicle_id in eligible:
            table = self.table(vehicle_id)
            offsets, value = self._minimize(table, score)
            weight = float(table.terms(offsets[None, :])[0][0])
            ranked.append((value, vehicle_id, table.stops(offsets), weight))
        ranked.sort(key=lambda r: (r[0], r[1]))
        picks = ranked[:self.scenario.budget]
        total = math.fsum(p[0] for p in picks)
        weight = math.fsum(p[3] for p in picks)
        feasible = math.isfinite(total) and total <= 0 and weight > 0
        return feasible, picks

    def _decision(self, stops):
        return Decision(
            selected=tuple(sorted(stops)),
            stops={v: stops[v] for v in sorted(stops)}
        )

    def step1_bisection(self):
        """Bisect over d in [0, 2 delta] for the smallest d whose sorted
        first-S metric sum is non-positive.

        Returns a Selection without swaps; d_dagger is the bisection result.
        """
        eligible = self._require_eligible()
        delta_eff = self._delta_eff()
        tol = self.config.bisection_tol

        lo, hi = 0.0, 2.0 * delta_eff
        feasible, picks = self._probe(eligible, hi, delta_eff)
        if not feasible:
            raise InfeasibleScenarioError(
                "no selection of %d vehicles has positive aggregation weight"
                % self.scenario.budget
            )
        probes = 1
        zero_feasible, zero_picks = self._probe(eligible, 0.0, delta_eff)
        if zero_feasible:
            hi, picks = 0.0, zero_picks
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            feasible, mid_picks = self._probe(eligible, mid, delta_eff)
            probes += 1
            self.logger.debug(
                "bisection d=%.9g feasible=%s" % (mid, feasible)
            )
            if feasible:
                hi, picks = mid, mid_picks
            else:
                lo = mid

        decision = self._decision({p[1]: p[2] for p in picks})
        self.logger.info(
            "step 1: d=%.9g after %d probes, selected %s"
            % (hi, probes, list(decision.selected))
        )
        return Selection(
            decision=decision,
            breakdown=self.evaluate(decision),
            d_dagger=hi,
            delta_zero_branch=self.delta == 0,
            heuristic_vehicles=self._heuristic_vehicles(),
            ineligible=self.eligibility()[1]
        )

    def evaluate(self, decision):
        """Return breakdown of a decision, computed from scratch.

        :param Decision decision: Decision
        """
        return omega(
            self.scenario, decision, estimator=self.estimator,
            logger=self.logger
        )

    def _candidate_pool(self, candidates):
        """Concatenated terms of all exact candidate tables."""
        exact = [v for v in candidates if self.table(v).exact]
        if not exact:
            return None
        terms = [self.table(v).all_terms for v in exact]
        sizes = [len(t[0]) for t in terms]
        return {
            'ids': exact,
            'starts': np.concatenate(([0], np.cumsum(sizes)[:-1])),
            'rho': np.concatenate([t[0] for t in terms]),
            'd_tilde': np.concatenate([t[1] for t in terms]),
            'mix': np.vstack([t[2] for t in terms]),
            'eligible': np.concatenate([t[3] for t in terms])
        }

    def _swap_candidates(self, pool, score, unselected):
        """Yield (vehicle ID, offsets, value) of the best stops for every
        unselected candidate.
        """
        results = {}
        if pool is not None:
            values = score(
                pool['rho'], pool['d_tilde'], pool['mix'], pool['eligible']
            )
            for i, vehicle_id in enumerate(pool['ids']):
                if vehicle_id not in unselected:
                    continue
                table = self.table(vehicle_id)
                segment = values[pool['starts'][i]:][:len(table.combos)]
                k = int(np.argmin(segment))
                results[vehicle_id] = (table.combos[k], float(segment[k]))
        for vehicle_id in unselected:
            if vehicle_id not in results:
                results[vehicle_id] = self._minimize(
                    self.table(vehicle_id), score
                )
        for vehicle_id in sorted(results):
            offsets, value = results[vehicle_id]
            yield vehicle_id, offsets, value

    def step2_local_search(self, initial):
        """Refine a selection by best-improvement single swaps.

        Only the inserted vehicle's stops are re-optimized.

        :param Selection initial: Initial selection
        """
        eligible = self.eligibility()[0]
        stops = dict(initial.decision.stops)
        terms = {}
        for vehicle_id, vehicle_stops in stops.items():
            table = self.table(vehicle_id)
            rho_, d_tilde, mix, _ = table.terms(
                table.offsets(vehicle_stops)[None, :]
            )
            terms[vehicle_id] = (rho_[0], d_tilde[0], mix[0])

        def sums(vehicle_ids):
            base_rho = math.fsum(terms[v][0] for v in vehicle_ids)
            base_div = math.fsum(terms[v][0] * terms[v][1] for v in vehicle_ids)
            base_mix = np.zeros(len(self.target))
            for v in vehicle_ids:
                base_mix = base_mix + terms[v][0] * terms[v][2]
            return base_rho, base_div, base_mix

        current = initial.breakdown.omega
        # selected vehicles stay in the pool and are skipped while selected
        pool = self._candidate_pool(eligible)
        swap_log = []
        iters = 0
        while iters < self.config.max_local_search_iters:
            selected = sorted(stops)
            unselected = set(v for v in eligible if v not in stops)
            if not unselected:
                break
            best = None
            for removed in selected:
                score = self._omega_score(
                    *sums([v for v in selected if v != removed])
                )
                for inserted, offsets, value in self._swap_candidates(
                        pool, score, unselected):
                    if best is None or value < best[0]:
                        best = (value, removed, inserted, offsets)
            iters += 1
            if best is None or not best[0] < current - SWAP_MARGIN:
                break

            value, removed, inserted, offsets = best
            table = self.table(inserted)
            del stops[removed]
            del terms[removed]
            stops[inserted] = table.stops(offsets)
            rho_, d_tilde, mix, _ = table.terms(offsets[None, :])
            terms[inserted] = (rho_[0], d_tilde[0], mix[0])
            current = value
            swap_log.append(SwapRecord(removed, inserted, value))
            self.logger.info(
                "swap %d: %s -> %s, omega %.9g"
                % (iters, removed, inserted, value)
            )

        decision = self._decision(stops)
        return Selection(
            decision=decision,
            breakdown=self.evaluate(decision),
            d_dagger=initial.d_dagger,
            iters_used=iters,
            swap_log=tuple(swap_log),
            delta_zero_branch=initial.delta_zero_branch,
            heuristic_vehicles=initial.heuristic_vehicles,
            ineligible=initial.ineligible
        )

    def solve(self):
        """Run step 1 then step 2."""
        if self.delta == 0:
            self.logger.info(
                "delta is zero: step 1 uses surrogate delta 1, step 2 "
                "minimizes the global divergence"
            )
        initial = self.step1_bisection()
        selection = self.step2_local_search(initial)
        self.logger.info(
            "selected %s, omega %.9g after %d swaps"
            % (list(selection.decision.selected),
               selection.breakdown.omega, len(selection.swap_log))
        )
        return selection

    def _full_terms(self, table):
        if table.exact:
            return table.combos, table.all_terms
        combos = np.array(
            list(itertools.product(*(range(n) for n in table.sizes))),
            dtype=int
        ).reshape(-1, len(table.sizes))
        return combos, table.terms(combos)

    def enumeration_size(self, eligible):
        """Return number of (subset, stop vectors) combinations."""
        # elementary symmetric polynomial of the per-vehicle counts
        counts = [0] * (self.scenario.budget + 1)
        counts[0] = 1
        for vehicle_id in eligible:
            n = self.table(vehicle_id).num_combos
            for k in range(self.scenario.budget, 0, -1):
                counts[k] += counts[k - 1] * n
        return counts[self.scenario.budget]

    def brute_force(self, objective='omega'):
        """Return (Obj*, decision) by enumerating every subset of S eligible
        vehicles and every stop vector.

        :param str objective: 'omega' for the full objective, 'client' for
                              delta times the weighted client divergence
        """
        if objective not in OBJECTIVES:
            raise ValueError("unknown objective '%s'" % objective)
        eligible = self._require_eligible()
        size = self.enumeration_size(eligible)
        if size > self.config.brute_force_limit:
            raise InstanceTooLargeError(
                "%d combinations exceed the limit of %d"
                % (size, self.config.brute_force_limit)
            )

        full = {v: self._full_terms(self.table(v)) for v in eligible}
        budget = self.scenario.budget
        best_value = math.inf
        best = None
        for subset in itertools.combinations(eligible, budget):
            total = 0.0
            weighted_div = 0.0
            weighted_mix = 0.0
            penalty = 0.0
            for i, vehicle_id in enumerate(subset):
                rho_, d_tilde, mix, ok = full[vehicle_id][1]
                shape = [1] * budget
                shape[i] = len(rho_)
                total = total + rho_.reshape(shape)
                weighted_div = weighted_div + (rho_ * d_tilde).reshape(shape)
                weighted_mix = weighted_mix + (
                    rho_[:, None] * mix
                ).reshape(shape + [mix.shape[1]])
                penalty = penalty + np.where(ok, 0.0, np.inf).reshape(shape)

            with np.errstate(divide='ignore', invalid='ignore'):
                values = self.delta * weighted_div / total
                if objective == 'omega':
                    values = values + np.abs(
                        weighted_mix / total[..., None] - self.target
                    ).sum(axis=-1)
            values = np.where(total > 0, values + penalty, np.inf)
            k = int(np.argmin(values))
            value = float(values.flat[k])
            if value < best_value:
                best_value = value
                index = np.unravel_index(k, values.shape)
                best = {
                    v: self.table(v).stops(full[v][0][index[i]])
                    for i, v in enumerate(subset)
                }

        self.logger.debug(
            "brute force over %d combinations: %.12g" % (size, best_value)
        )
        if best is None:
            raise InfeasibleScenarioError(
                "no decision has positive aggregation weight"
            )
        return best_value, self._decision(best)


def optimize_g_for_metric(scenario, vehicle_id, d, config=None):
    """Return (stops, metric) of a vehicle for bisection parameter d.

    :param Scenario scenario: Scenario
    :param int vehicle_id: Vehicle ID
    :param float d: Bisection parameter
    :param OptimizerConfig config: Optimizer config
    """
    return Optimizer(scenario, config).optimize_g_for_metric(vehicle_id, d)


def step1_bisection(scenario, config=None):
    return Optimizer(scenario, config).step1_bisection()


def step2_local_search(scenario, initial, config=None):
    return Optimizer(scenario, config).step2_local_search(initial)


def solve(scenario, config=None, logger=None):
    """Return optimized selection of a scenario.

    :param Scenario scenario: Scenario
    :param OptimizerConfig config: Optimizer config
    :param Logger logger: Application logger
    """
    return Optimizer(scenario, config, logger).solve()


def brute_force(scenario, config=None, objective='omega'):
    return Optimizer(scenario, config).brute_force(objective)
