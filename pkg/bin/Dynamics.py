'''
Repeated-play engine: synchronous rounds over a fixed horizon, checkpointed
empirical distributions with regret and payoff tracking, Cournot quantity
dynamics, and the convergence checks (approach, self-convergence,
convergence to a distribution) plus MAPE.
'''
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from Agents import (AgentSpec, OGDAgent, ScheduleAgent, make_agent,
                    regrets_from_counts)
from Equilibrium import cce_violation
from GameCore import (BimatrixGame, CournotScenario, DimensionMismatchError,
                      JointDistribution, MixedProfile,
                      joint_expected_utilities)
from utils import get_float, get_int


logger = logging.getLogger(__name__)

N_CHECKPOINTS = get_int('DYNAMICS', 'checkpoints')
LOG_LIMIT = get_int('DYNAMICS', 'logLimit')
COURNOT_GRID_POINTS = get_int('DYNAMICS', 'cournotGridPoints')
COURNOT_MW_ETA = get_float('DYNAMICS', 'cournotMwEta')
MIN_WINDOW = get_int('DYNAMICS', 'minWindowCheckpoints')


class InsufficientCheckpointsError(ValueError):
    """A convergence check lacks checkpoints at the horizon or in its window."""


def checkpoint_grid(horizon: int, points: int = N_CHECKPOINTS, extra: Iterable[int] = ()) -> np.ndarray:
    """Geometrically spaced round numbers in [1, horizon], always including horizon."""
    if horizon < 1:
        raise ValueError(f'Horizon must be at least 1, got {horizon}.')
    grid = np.unique(np.round(np.geomspace(1, horizon, max(points, 1))).astype(np.int64))
    extra = [int(t) for t in extra if 1 <= int(t) <= horizon]
    return np.unique(np.concatenate([grid, np.array(extra + [horizon], dtype=np.int64)]))


@dataclass(frozen=True, eq=False)
class DynamicsTrace:
    """
    Checkpointed record of one run. Regrets and payoffs are cumulative;
    `distributions` holds p_t = counts_t / t at each checkpoint when recorded,
    `strategies` the agents' current first-action probabilities (2x2 games).
    """
    seed: int
    horizon: int
    shape: tuple
    checkpoints: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    regrets: np.ndarray
    payoffs: np.ndarray
    counts: np.ndarray
    distributions: Optional[np.ndarray] = None
    strategies: Optional[np.ndarray] = None
    log: Optional[np.ndarray] = None

    def final_distribution(self) -> JointDistribution:
        return JointDistribution.from_counts(self.counts)

    def distribution_at(self, t: int) -> JointDistribution:
        if self.distributions is None:
            raise ValueError('Trace was recorded without joint distributions.')
        idx = np.searchsorted(self.checkpoints, t)
        if idx >= self.checkpoints.size or self.checkpoints[idx] != t:
            raise InsufficientCheckpointsError(f'Round {t} is not a checkpoint of this trace.')
        return JointDistribution(self.distributions[idx])

    def final_marginals(self) -> MixedProfile:
        return self.final_distribution().marginals()

    def regret_per_round(self) -> np.ndarray:
        return self.regrets[-1] / self.horizon


def _record_strategy(agent) -> float:
    strategy = getattr(agent, 'strategy', None)
    if strategy is None:
        return math.nan
    return float(strategy()[0])


def _uses_shared_schedule(agents, specs) -> bool:
    return (
        all(type(agent) is type(agents[0]) and isinstance(agent, ScheduleAgent) for agent in agents)
        and specs[0] == specs[1]
    )


def run_dynamics(
        game: BimatrixGame,
        specs: Sequence[AgentSpec],
        horizon: int,
        seed: int,
        checkpoints: Optional[Sequence[int]] = None,
        keep_log: Optional[bool] = None,
        record_distributions: bool = True) -> DynamicsTrace:
    """
    Synchronous self-play: every round all agents act, then all observe the
    joint profile. The trace is fully determined by (game, specs, horizon, seed).
    When both agents follow the same schedule the counts are computed in
    closed form instead of round by round.
    """
    if horizon < 1:
        raise ValueError(f'Horizon must be at least 1, got {horizon}.')
    if len(specs) != 2:
        raise DimensionMismatchError(f'Expected one agent spec per player, got {len(specs)}.')
    grid = checkpoint_grid(horizon) if checkpoints is None else checkpoint_grid(horizon, 1, checkpoints)
    if keep_log is None:
        keep_log = horizon <= LOG_LIMIT

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    agents = [make_agent(specs[p], game, p, horizon, rngs[p]) for p in (0, 1)]
    m, n = game.shape
    k = grid.size
    row_marg, col_marg = np.zeros((k, m)), np.zeros((k, n))
    regrets, payoffs = np.zeros((k, 2)), np.zeros((k, 2))
    dists = np.zeros((k, m, n)) if record_distributions else None
    strategies = np.full((k, 2), math.nan) if game.is_2x2 else None
    log = None

    logger.info('Running %s vs %s on %s for %d rounds (seed %d)',
                specs[0].algo, specs[1].algo, game.name or 'game', horizon, seed)

    def snapshot(idx: int, t: int, counts: np.ndarray) -> None:
        dist = counts / t
        row_marg[idx], col_marg[idx] = dist.sum(axis=1), dist.sum(axis=0)
        regrets[idx] = regrets_from_counts(game, counts)
        payoffs[idx] = ((counts * game.u1).sum(), (counts * game.u2).sum())
        if dists is not None:
            dists[idx] = dist

    if _uses_shared_schedule(agents, specs):
        logger.debug('Shared schedule detected, using closed-form counts')
        schedule = agents[0]
        for idx, t in enumerate(grid):
            counts = schedule.counts_at(int(t))
            snapshot(idx, int(t), counts)
            if strategies is not None:
                profile = schedule.profile_at(int(t))
                strategies[idx] = (1.0 - profile[0], 1.0 - profile[1])
        counts = schedule.counts_at(horizon)
        if keep_log:
            flat = schedule.flat_log(horizon)
            log = np.stack(np.divmod(flat, n), axis=1)
    else:
        counts = np.zeros((m, n), dtype=np.int64)
        if keep_log:
            log = np.zeros((horizon, 2), dtype=np.int64)
        idx = 0
        for t in range(1, horizon + 1):
            joint = (agents[0].act(t), agents[1].act(t))
            for agent in agents:
                agent.observe(t, joint)
            counts[joint] += 1
            if log is not None:
                log[t - 1] = joint
            if t == grid[idx]:
                snapshot(idx, t, counts)
                if strategies is not None:
                    strategies[idx] = (_record_strategy(agents[0]), _record_strategy(agents[1]))
                idx += 1

    logger.debug('Final regrets/T: %s', regrets[-1] / horizon)
    return DynamicsTrace(
        seed=seed,
        horizon=horizon,
        shape=game.shape,
        checkpoints=grid,
        row_marginals=row_marg,
        col_marginals=col_marg,
        regrets=regrets,
        payoffs=payoffs,
        counts=counts,
        distributions=dists,
        strategies=strategies,
        log=log,
    )


def _run_seed(args):
    game, specs, horizon, seed, kwargs = args
    return run_dynamics(game, specs, horizon, seed, **kwargs)


def run_ensemble(game: BimatrixGame, specs: Sequence[AgentSpec], horizon: int,
                 seeds: Sequence[int], workers: int = 1, **kwargs) -> List[DynamicsTrace]:
    """Independent runs over seeds, returned in seed order."""
    jobs = [(game, tuple(specs), horizon, seed, kwargs) for seed in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_seed(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run_seed, jobs))


@dataclass(frozen=True, eq=False)
class QuantityTrace:
    """
    Time-average quantities (q1_bar, q2_bar) at each checkpoint of a Cournot
    run, and the time-average of the users' realized profits at the true costs.
    """
    seed: int
    horizon: int
    checkpoints: np.ndarray
    mean_quantities: np.ndarray
    mean_utilities: tuple

    @property
    def final(self) -> tuple:
        return float(self.mean_quantities[-1, 0]), float(self.mean_quantities[-1, 1])


def cournot_grid_game(scn: CournotScenario, declared: Sequence[float],
                      points: int = COURNOT_GRID_POINTS) -> tuple:
    """Declared-cost Cournot game on a uniform quantity grid over [0, a/b]."""
    grid = np.linspace(0.0, scn.q_max, points)
    q1, q2 = np.meshgrid(grid, grid, indexing='ij')
    price = scn.a - scn.b * (q1 + q2)
    game = BimatrixGame(q1 * (price - declared[0]), q2 * (price - declared[1]), name='cournot_grid')
    return game, grid


def run_cournot_dynamics(
        scn: CournotScenario,
        declared: Sequence[float],
        specs: Sequence[AgentSpec],
        horizon: int,
        seed: int,
        grid_points: int = COURNOT_GRID_POINTS,
        checkpoints: Optional[Sequence[int]] = None) -> QuantityTrace:
    """
    Self-play on the declared-cost duopoly. OGD agents move continuous
    quantities; MW agents play a uniform quantity grid.
    """
    algos = {spec.algo for spec in specs}
    if not algos <= {'ogd', 'mw'} or len(algos) != 1:
        raise ValueError(f'Cournot dynamics need two OGD or two MW agents, got {[s.algo for s in specs]}.')
    declared = tuple(min(max(float(x), 0.0), scn.a) for x in declared)
    grid_t = checkpoint_grid(horizon) if checkpoints is None else checkpoint_grid(horizon, 1, checkpoints)

    if algos == {'mw'}:
        game, grid = cournot_grid_game(scn, declared, grid_points)
        specs = [AgentSpec('mw', eta=spec.eta or COURNOT_MW_ETA) for spec in specs]
        trace = run_dynamics(game, specs, horizon, seed, checkpoints=grid_t,
                             keep_log=False, record_distributions=False)
        means = np.stack([trace.row_marginals @ grid, trace.col_marginals @ grid], axis=1)
        true_game, _ = cournot_grid_game(scn, scn.costs, grid_points)
        utilities = joint_expected_utilities(true_game, trace.final_distribution())
        return QuantityTrace(seed, horizon, trace.checkpoints, means, utilities)

    logger.info('Running OGD Cournot dynamics at declared costs %s for %d rounds', declared, horizon)
    agents = [OGDAgent(scn, p, declared[p], step0=specs[p].step0) for p in (0, 1)]
    totals, profits = np.zeros(2), np.zeros(2)
    true_costs = np.array(scn.costs)
    means = np.zeros((grid_t.size, 2))
    idx = 0
    for t in range(1, horizon + 1):
        quantities = (agents[0].act(t), agents[1].act(t))
        for agent in agents:
            agent.observe(t, quantities)
        totals += quantities
        profits += np.array(quantities) * (scn.a - scn.b * sum(quantities) - true_costs)
        if t == grid_t[idx]:
            means[idx] = totals / t
            idx += 1
    utilities = tuple(float(v) for v in profits / horizon)
    return QuantityTrace(seed, horizon, grid_t, means, utilities)


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    value: float
    detail: str = ''

    def __bool__(self):
        return self.passed

    def to_json(self) -> dict:
        return {'passed': self.passed, 'value': self.value, 'detail': self.detail}


def check_approach(
        trace: DynamicsTrace,
        target: Union[str, Sequence[JointDistribution]],
        eps: float,
        game: Optional[BimatrixGame] = None) -> CheckResult:
    """
    Does the final empirical distribution lie strictly within eps of the target set?
    The target is either a finite list of distributions (L1 distance) or 'cce',
    in which case the violation functional of `game` stands in for the distance.
    """
    final = trace.final_distribution()
    if isinstance(target, str):
        if target != 'cce' or game is None:
            raise ValueError("String targets must be 'cce' and need the game.")
        value = cce_violation(game, final)
        return CheckResult(value < eps, value, 'cce violation')
    targets = list(target)
    if not targets:
        raise ValueError('Target set must not be empty.')
    value = min(final.l1_distance(dist) for dist in targets)
    return CheckResult(value < eps, value, 'L1 distance to target set')


def check_self_convergent(
        trace: DynamicsTrace,
        eps: float,
        horizons: Optional[Sequence[int]] = None,
        min_window: int = MIN_WINDOW) -> CheckResult:
    """
    For every horizon H (default: the trace horizon) and every checkpoint t in
    (eps*H, H], require |p_t - p_H|_1 < eps. Each window needs `min_window`
    checkpoints.
    """
    if trace.distributions is None:
        raise ValueError('Self-convergence needs a trace recorded with distributions.')
    horizons = [trace.horizon] if horizons is None else [int(h) for h in horizons]
    worst, worst_h = 0.0, horizons[0]
    for horizon in horizons:
        end = trace.distribution_at(horizon).probs
        in_window = (trace.checkpoints > eps * horizon) & (trace.checkpoints <= horizon)
        count = int(in_window.sum())
        if count < min_window:
            raise InsufficientCheckpointsError(
                f'Only {count} checkpoints in ({eps * horizon:g}, {horizon}]; need {min_window}.'
            )
        gaps = np.abs(trace.distributions[in_window] - end).sum(axis=(1, 2))
        if gaps.max() > worst:
            worst, worst_h = float(gaps.max()), horizon
    return CheckResult(worst < eps, worst, f'worst window ends at {worst_h}')


def check_converges_to(
        trace: DynamicsTrace,
        target: JointDistribution,
        eps: float,
        horizons: Optional[Sequence[int]] = None,
        min_window: int = MIN_WINDOW) -> CheckResult:
    """Approach {target} and self-convergence together."""
    approach = check_approach(trace, [target], eps)
    selfconv = check_self_convergent(trace, eps, horizons, min_window)
    return CheckResult(
        approach.passed and selfconv.passed,
        max(approach.value, selfconv.value),
        f'approach {approach.value:.4g}, self-convergence {selfconv.value:.4g}',
    )


def mape(empirical: JointDistribution, reference: JointDistribution) -> float:
    """Mean over cells of |empirical - reference| / reference."""
    if empirical.shape != reference.shape:
        raise DimensionMismatchError(f'Shapes differ: {empirical.shape} vs {reference.shape}.')
    if np.any(reference.probs <= 0):
        raise ValueError('MAPE needs a reference with strictly positive cells.')
    return float(np.mean(np.abs(empirical.probs - reference.probs) / reference.probs))
