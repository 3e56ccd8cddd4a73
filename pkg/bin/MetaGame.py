'''
The users' game over declarations: meta-utilities (analytic limit or
simulated dynamics), best responses, closed-form meta-equilibria for
linear Cournot and opposing-interests 2x2 families, manipulation-freeness,
epsilon-equilibrium certificates and dominant-declaration construction.
'''
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from Agents import AgentSpec
from Dynamics import run_cournot_dynamics, run_ensemble
from Equilibrium import (CournotOutcome, NoUniqueEquilibriumError,
                         cournot_ne, cournot_outcome_at, has_unique_cce,
                         iterated_elimination, mixed_ne_2x2, pure_ne,
                         stackelberg)
from GameCore import (CELL_INDEX, COL, PLAYER_KEYS, ROW, BimatrixGame,
                      CournotScenario, Declaration, DeclarationError,
                      DegenerateGameError, MixedProfile,
                      NotOpposingInterestsError, ParamGame2x2,
                      expected_utilities_2x2, is_opposing_interests,
                      joint_expected_utilities, load_family, player_index,
                      solve_indifference_cell, validate_natural_space)
from utils import get_float, get_int, parse_seeds


logger = logging.getLogger(__name__)

GRID_POINTS = get_int('METAGAME', 'gridPoints')
MAX_ITERATIONS = get_int('METAGAME', 'maxIterations')
EPSILON_DELTA = get_float('METAGAME', 'epsilonDelta')
DOMINANCE_MARGIN = get_float('METAGAME', 'dominanceMargin')
UTILITY_TOL = get_float('TOLERANCES', 'utility')

Family = Union[ParamGame2x2, CournotScenario]

# Search intervals for canonical families whose parameter spaces are unbounded.
DEFAULT_GRID_BOUNDS = {
    'G_OI': {'row': [(0.0, 10.0)], 'col': [(0.0, 10.0)]},
    'G_DS': {'row': [(0.0, 1e4)], 'col': [(0.0, 8.0)]},
    'G_DS_wide': {'row': [(0.0, 10.0), (0.0, 10.0)], 'col': [(0.0, 8.0)]},
    'matching_pennies': {'row': [(-0.5, 10.0)], 'col': [(-0.5, 10.0)]},
}

MODES = ('analytic', 'simulated')


class UnnaturalSpaceError(ValueError):
    """An opposing-interests family fails the natural-space conditions."""


@dataclass(frozen=True, eq=False)
class MetaGameScenario:
    """
    A family with true types, per-player declaration grids and the mode in
    which user utilities are evaluated.
    """
    family: Family
    grids: Tuple[Tuple[Tuple[float, ...], ...], Tuple[Tuple[float, ...], ...]]
    mode: str = 'analytic'
    specs: Optional[Tuple[AgentSpec, AgentSpec]] = None
    horizon: int = 0
    seeds: Tuple[int, ...] = ()
    workers: int = 1
    name: str = ''

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f'Unknown utility mode {self.mode!r}; expected one of {MODES}.')
        truth = self.truth
        if not self.family.contains(truth):
            raise DeclarationError('True types lie outside the declaration spaces.')
        if self.mode == 'simulated':
            if self.specs is None or len(self.specs) != 2:
                raise ValueError('Simulated mode needs one agent spec per player.')
            if self.horizon < 1 or not self.seeds:
                raise ValueError('Simulated mode needs a positive horizon and at least one seed.')
        elif isinstance(self.family, ParamGame2x2):
            base = self.family.base
            if not has_unique_cce(base):
                raise NoUniqueEquilibriumError(
                    f'Analytic mode needs a unique-CCE family; {base!r} is neither '
                    'dominance-solvable nor uniquely fully mixed.'
                )
        for idx in (ROW, COL):
            if not self.grids[idx]:
                raise ValueError(f'Declaration grid of player {idx} is empty.')

    @property
    def truth(self) -> Declaration:
        return self.family.truth()

    @property
    def is_cournot(self) -> bool:
        return isinstance(self.family, CournotScenario)

    @classmethod
    def build(cls, family: Family, points: int = GRID_POINTS,
              bounds: Optional[Dict[str, Sequence[Tuple[float, float]]]] = None,
              **kwargs) -> 'MetaGameScenario':
        """Scenario with uniform grids over the given (or default) intervals."""
        if bounds is None and isinstance(family, ParamGame2x2):
            bounds = DEFAULT_GRID_BOUNDS.get(family.name)
        grids = []
        for idx, key in enumerate(PLAYER_KEYS):
            player_bounds = None if bounds is None else bounds.get(key)
            grids.append(tuple(family.grid(idx, points, player_bounds)))
        return cls(family, (grids[0], grids[1]), **kwargs)

    @classmethod
    def from_json(cls, data: Dict[str, Any], workers: int = 1) -> 'MetaGameScenario':
        family_data = data['family']
        if isinstance(family_data, dict) and 'cournot' in family_data:
            family: Family = CournotScenario.from_json(family_data)
        else:
            family = load_family(family_data)
        grids = data.get('grids', {})
        bounds = None
        if grids.get('row', {}).get('bounds') or grids.get('col', {}).get('bounds'):
            bounds = {key: [tuple(b) for b in grids[key]['bounds']] for key in PLAYER_KEYS if key in grids}
        points = int(grids.get('points', GRID_POINTS))
        kwargs: Dict[str, Any] = {'mode': data.get('mode', 'analytic'), 'workers': workers,
                                  'name': data.get('name', '')}
        if kwargs['mode'] == 'simulated':
            kwargs['specs'] = tuple(AgentSpec.from_json(spec) for spec in data['agents'])
            kwargs['horizon'] = int(data['horizon'])
            seeds = data.get('seeds', '1')
            kwargs['seeds'] = tuple(parse_seeds(seeds) if isinstance(seeds, str) else seeds)
        return cls.build(family, points=points, bounds=bounds, **kwargs)

    def with_mode(self, mode: str, **kwargs) -> 'MetaGameScenario':
        fields = dict(family=self.family, grids=self.grids, mode=mode, specs=self.specs,
                      horizon=self.horizon, seeds=self.seeds, workers=self.workers, name=self.name)
        fields.update(kwargs)
        return MetaGameScenario(**fields)


@dataclass(frozen=True, eq=False)
class MetaEquilibriumReport:
    declaration: Declaration
    outcome: Union[MixedProfile, CournotOutcome]
    utilities: Tuple[float, float]
    epsilon: float
    tag: str
    region: str = ''
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        if isinstance(self.outcome, MixedProfile):
            outcome = {'p': self.outcome.p, 'q': self.outcome.q}
        else:
            outcome = self.outcome.to_json()
        data = {
            'declaration': self.declaration.to_json(),
            'outcome': outcome,
            'utilities': list(self.utilities),
            'epsilon': self.epsilon,
            'tag': self.tag,
        }
        if self.region:
            data['region'] = self.region
        if self.detail:
            data['detail'] = self.detail
        return data


def declared_equilibrium(game: BimatrixGame) -> MixedProfile:
    """
    The unique equilibrium of a declared 2x2 game: the surviving profile of a
    strictly dominance-solvable game, or the fully mixed NE.
    :raises NoUniqueEquilibriumError: for any other game.
    :raises DegenerateGameError: for weak-dominance ties.
    """
    trace = iterated_elimination(game)
    if trace.is_singleton:
        i, j = trace.profile
        return MixedProfile.from_pq(1.0 if i == 0 else 0.0, 1.0 if j == 0 else 0.0)
    profile = mixed_ne_2x2(game)
    if profile is None or not (0.0 < profile.p < 1.0 and 0.0 < profile.q < 1.0) or pure_ne(game):
        raise NoUniqueEquilibriumError(f'Declared game {game!r} has no unique CCE.')
    return profile


def meta_utility(scn: MetaGameScenario, decl: Declaration) -> Tuple[float, float]:
    """User utilities at true types when the agents play under `decl`."""
    family = scn.family
    if not family.contains(decl):
        raise DeclarationError(f'Declaration {decl.to_json()} lies outside the parameter space.')
    declared = (decl.scalar(ROW), decl.scalar(COL)) if scn.is_cournot else None

    if scn.mode == 'analytic':
        if scn.is_cournot:
            outcome = cournot_outcome_at(family, declared)
            return outcome.u1, outcome.u2
        return expected_utilities_2x2(family.base, declared_equilibrium(family.instantiate(decl)))

    if scn.is_cournot:
        # Realized profits averaged over rounds, then over seeds.
        utilities = np.array([
            run_cournot_dynamics(family, declared, scn.specs, scn.horizon, seed).mean_utilities
            for seed in scn.seeds
        ])
        return tuple(float(v) for v in utilities.mean(axis=0))

    traces = run_ensemble(family.instantiate(decl), scn.specs, scn.horizon, scn.seeds,
                          workers=scn.workers, record_distributions=False, keep_log=False)
    utilities = np.array([
        joint_expected_utilities(family.base, trace.final_distribution()) for trace in traces
    ])
    return tuple(float(v) for v in utilities.mean(axis=0))


class BestResponse(NamedTuple):
    declaration: Declaration
    utility: float
    skipped: int


def _cournot_candidates(scn: CournotScenario, player: int, other: float) -> List[float]:
    a = scn.a
    own_cost = scn.costs[player]
    lower = max(0.0, 2.0 * other - a)
    upper = (a + other) / 2.0
    candidates = [own_cost, min(max((6.0 * own_cost - a - other) / 4.0, lower), upper), a]
    if 2.0 * other - a >= 0.0:
        # the opponent is driven out: monopoly at the declared cost, best at the true cost
        candidates.append(min(max(own_cost, 0.0), 2.0 * other - a))
    return [min(max(x, 0.0), a) for x in candidates]


def _grid_best_response(scn: MetaGameScenario, player: int, decl: Declaration) -> BestResponse:
    best_decl, best_value, skipped = None, -math.inf, 0
    # Truth first so that ties keep it.
    candidates = [scn.truth[player]] + [v for v in scn.grids[player] if v != scn.truth[player]]
    values = []
    for vec in candidates:
        trial = decl.with_player(player, vec)
        try:
            value = meta_utility(scn, trial)[player]
        except (DegenerateGameError, NoUniqueEquilibriumError) as exc:
            skipped += 1
            logger.debug('Skipping declaration %s: %s', trial.to_json(), exc)
            values.append(-math.inf)
            continue
        values.append(value)
        if value > best_value + UTILITY_TOL:
            best_decl, best_value = trial, value
    if skipped:
        logger.warning('Skipped %d degenerate or non-unique declarations for player %d', skipped, player)
    if best_decl is None:
        raise DeclarationError(f'No evaluable declaration on the grid of player {player}.')

    # Bounded refinement between grid neighbours for scalar analytic searches.
    if scn.mode == 'analytic' and len(best_decl[player]) == 1 and len(candidates) > 2:
        points = sorted(v[0] for v, u in zip(candidates, values) if math.isfinite(u))
        x0 = best_decl[player][0]
        pos = points.index(x0)
        lo, hi = points[max(pos - 1, 0)], points[min(pos + 1, len(points) - 1)]
        if hi > lo:
            def negative(x):
                try:
                    return -meta_utility(scn, decl.with_player(player, x))[player]
                except (DegenerateGameError, NoUniqueEquilibriumError, DeclarationError):
                    return math.inf
            result = minimize_scalar(negative, bounds=(lo, hi), method='bounded',
                                     options={'xatol': 1e-10})
            if result.success and -result.fun > best_value + UTILITY_TOL:
                best_decl, best_value = decl.with_player(player, float(result.x)), float(-result.fun)
    return BestResponse(best_decl, best_value, skipped)


def best_response(scn: MetaGameScenario, player: Union[int, str], decl: Declaration) -> BestResponse:
    """Best response with its utility; Cournot analytic mode compares closed-form candidates."""
    idx = player_index(player)
    if scn.is_cournot and scn.mode == 'analytic':
        other = decl.scalar(1 - idx)
        best_decl, best_value = None, -math.inf
        for x in _cournot_candidates(scn.family, idx, other):
            trial = decl.with_player(idx, x)
            value = meta_utility(scn, trial)[idx]
            if value > best_value + UTILITY_TOL:
                best_decl, best_value = trial, value
        return BestResponse(best_decl, best_value, 0)
    return _grid_best_response(scn, idx, decl)


def meta_best_response(scn: MetaGameScenario, player: Union[int, str], opponent: Declaration) -> Declaration:
    """
    The player's utility-maximizing declaration against the opponent's part of
    `opponent`; the returned profile keeps the opponent's declaration.
    """
    return best_response(scn, player, opponent).declaration


def _report(scn: MetaGameScenario, decl: Declaration, outcome, region: str = '',
            detail: Optional[Dict[str, Any]] = None, eps: float = EPSILON_DELTA) -> MetaEquilibriumReport:
    certificate = epsilon_equilibrium_check(scn, decl, eps)
    truthful = all(
        np.allclose(decl[idx], scn.truth[idx], rtol=0.0, atol=1e-12) for idx in (ROW, COL)
    )
    if truthful:
        tag = 'truthful'
    elif certificate.gain <= UTILITY_TOL:
        tag = 'meta-NE'
    else:
        tag = 'eps-NE' if certificate.passed else 'unilateral-manipulation'
    return MetaEquilibriumReport(decl, outcome, certificate.utilities, certificate.gain, tag,
                                 region=region, detail=detail or {})


def _cournot_scenario(scn: Union[MetaGameScenario, CournotScenario]) -> MetaGameScenario:
    if isinstance(scn, CournotScenario):
        return MetaGameScenario.build(scn)
    if not scn.is_cournot:
        raise TypeError('Expected a Cournot scenario.')
    return scn


def cournot_meta_profile(scn: CournotScenario) -> Tuple[Tuple[float, float], str]:
    """
    Closed-form meta-equilibrium declarations and the case that produced them:
    truthful, drive-out-1/2, both-declare, x1=0, x2=0 or 0,0.
    """
    a = scn.a
    c1, c2 = scn.costs
    truthful = cournot_ne(scn)
    if truthful.q1 == 0.0 or truthful.q2 == 0.0:
        return (c1, c2), 'truthful'
    if c2 >= a / 2.0 and c2 >= (2.0 * c1 + a) / 3.0:
        return (2.0 * c2 - a, c2), 'drive-out-1'
    if c1 >= a / 2.0 and c1 >= (2.0 * c2 + a) / 3.0:
        return (c1, 2.0 * c1 - a), 'drive-out-2'
    x1 = (8.0 * c1 - 2.0 * c2 - a) / 5.0
    x2 = (8.0 * c2 - 2.0 * c1 - a) / 5.0
    if x1 >= 0.0 and x2 >= 0.0:
        return (x1, x2), 'both-declare'
    only2 = max(0.0, (6.0 * c2 - a) / 4.0)
    if 6.0 * c1 - a - only2 <= 0.0 and only2 > 0.0:
        return (0.0, only2), 'x1=0'
    only1 = max(0.0, (6.0 * c1 - a) / 4.0)
    if 6.0 * c2 - a - only1 <= 0.0 and only1 > 0.0:
        return (only1, 0.0), 'x2=0'
    return (0.0, 0.0), '0,0'


def cournot_meta_equilibrium(scn: Union[MetaGameScenario, CournotScenario]) -> MetaEquilibriumReport:
    meta = _cournot_scenario(scn)
    (x1, x2), region = cournot_meta_profile(meta.family)
    decl = Declaration.of(x1, x2)
    outcome = cournot_outcome_at(meta.family, (x1, x2))
    logger.info('Cournot meta-equilibrium %s (%s)', (x1, x2), region)
    return _report(meta, decl, outcome, region=region)


def cournot_meta_region(scn: CournotScenario) -> str:
    return cournot_meta_profile(scn)[1]


def cournot_region_map(a: float, b: float, points: int) -> List[Tuple[float, float, str]]:
    """Meta-equilibrium case over a uniform (c1, c2) grid on [0, a]^2."""
    costs = np.linspace(0.0, a, points)
    return [
        (float(c1), float(c2), cournot_meta_region(CournotScenario(a, b, float(c1), float(c2))))
        for c1 in costs for c2 in costs
    ]


def oi_targets(game: BimatrixGame) -> Tuple[float, float]:
    """
    Induced profile of the opposing-interests meta-equilibrium:
        p = (D1 - C1) / (A1 - B1 + D1 - C1),  q = (D2 - B2) / (A2 - B2 + D2 - C2)
    """
    a1, b1, c1, d1 = (game.cell(ROW, k) for k in 'ABCD')
    a2, b2, c2, d2 = (game.cell(COL, k) for k in 'ABCD')
    return (d1 - c1) / (a1 - b1 + d1 - c1), (d2 - b2) / (a2 - b2 + d2 - c2)


def _require_natural(family: ParamGame2x2) -> None:
    if not is_opposing_interests(family.base):
        raise NotOpposingInterestsError(f'{family.base!r} is not an opposing-interests game.')
    report = validate_natural_space(family)
    if not report.passed:
        raise UnnaturalSpaceError(f'Family {family.name or ""} is not natural: {report.reason}')


def _solve_own_cells(family: ParamGame2x2, player: int, level: float) -> Optional[Tuple[float, ...]]:
    truth = family.truth()
    for pos, cell_name in enumerate(family.free_cells[player]):
        try:
            value = solve_indifference_cell(family.base, player, cell_name, level)
        except DegenerateGameError:
            continue
        values = list(truth[player])
        values[pos] = value
        if family.contains(truth.with_player(player, values)):
            return tuple(values)
    return None


def oi_meta_equilibrium(family: ParamGame2x2, true_game: Optional[BimatrixGame] = None,
                        scenario: Optional[MetaGameScenario] = None) -> MetaEquilibriumReport:
    """
    The essentially unique meta-equilibrium of an opposing-interests family on
    a natural space. Each player declares so that the opponent mixes at the
    level that leaves that player indifferent.
    """
    if true_game is not None and true_game != family.base:
        raise DeclarationError('The true game must be the base game of the family.')
    _require_natural(family)
    p, q = oi_targets(family.base)
    row_values = _solve_own_cells(family, ROW, q)
    col_values = _solve_own_cells(family, COL, p)
    if row_values is None or col_values is None:
        raise UnnaturalSpaceError('No declaration inside the space induces the equilibrium mix.')
    decl = Declaration((row_values, col_values))
    profile = MixedProfile.from_pq(p, q)
    utilities = expected_utilities_2x2(family.base, profile)
    if scenario is not None:
        return _report(scenario, decl, profile)
    tag = 'truthful' if decl == family.truth() else 'meta-NE'
    return MetaEquilibriumReport(decl, profile, utilities, 0.0, tag)


class ManipulationVerdict(NamedTuple):
    free: bool
    witness: Optional[Declaration]
    gain: float
    method: str


def manipulation_free(scn: MetaGameScenario, eps: float = EPSILON_DELTA) -> ManipulationVerdict:
    """
    Is truth-telling a meta-equilibrium? Cournot and opposing-interests
    families are classified in closed form; anything else by grid certification.
    A profitable unilateral deviation is returned as witness when not free.
    """
    truth = scn.truth
    base_utils = meta_utility(scn, truth)

    def deviation(player: int) -> ManipulationVerdict:
        response = best_response(scn, player, truth)
        return ManipulationVerdict(False, response.declaration,
                                   response.utility - base_utils[player], '')

    if scn.is_cournot and scn.mode == 'analytic':
        outcome = cournot_ne(scn.family)
        c1, c2 = scn.family.costs
        if outcome.q1 == 0.0 or outcome.q2 == 0.0 or (c1 == 0.0 and c2 == 0.0):
            return ManipulationVerdict(True, None, 0.0, 'cournot')
        verdict = max((deviation(idx) for idx in (ROW, COL)), key=lambda v: v.gain)
        return verdict._replace(method='cournot')

    if isinstance(scn.family, ParamGame2x2) and scn.mode == 'analytic' and is_opposing_interests(scn.family.base):
        base = scn.family.base
        p_star = mixed_ne_2x2(base)
        p_meta, q_meta = oi_targets(base)
        # The row player's utility is flat in q exactly when p* meets its target, and vice versa.
        row_ok = abs(p_meta - p_star.p) <= UTILITY_TOL
        col_ok = abs(q_meta - p_star.q) <= UTILITY_TOL
        if row_ok and col_ok:
            return ManipulationVerdict(True, None, 0.0, 'opposing-interests')
        verdict = deviation(ROW if not row_ok else COL)
        if verdict.gain <= 0:
            verdict = _oi_direction_witness(scn, ROW if not row_ok else COL, base_utils)
        return verdict._replace(method='opposing-interests')

    worst = max((deviation(idx) for idx in (ROW, COL)), key=lambda v: v.gain)
    if worst.gain <= eps:
        return ManipulationVerdict(True, None, worst.gain, 'grid')
    return worst._replace(method='grid')


def _oi_direction_witness(scn: MetaGameScenario, player: int, base_utils) -> ManipulationVerdict:
    # Moving the opponent's mix halfway to the favourable boundary is profitable.
    family = scn.family
    base = family.base
    star = mixed_ne_2x2(base)
    a, b, c, d = (base.cell(player, k) for k in 'ABCD')
    if player == ROW:
        slope, level = star.p * (a - c + d - b) + (c - d), star.q
    else:
        slope, level = star.q * (a - b + d - c) + (b - d), star.p
    target = level + 0.5 * (1.0 - level) if slope > 0 else level / 2.0
    values = _solve_own_cells(family, player, target)
    if values is None:
        return ManipulationVerdict(False, None, math.nan, '')
    decl = scn.truth.with_player(player, values)
    return ManipulationVerdict(False, decl, meta_utility(scn, decl)[player] - base_utils[player], '')


class DominantDeclaration(NamedTuple):
    declaration: Optional[Declaration]
    feasible: bool
    constraint: str


def construct_dominant_declaration(
        family: ParamGame2x2,
        player: Union[int, str],
        target_action: Optional[int] = None,
        margin: float = DOMINANCE_MARGIN) -> DominantDeclaration:
    """
    Declaration of `player`'s free cells under which `target_action` (default:
    the player's Stackelberg commitment) strictly dominates the other action.
    The opponent keeps the truth. Reports the binding constraint when the
    space is too narrow.
    """
    idx = player_index(player)
    base = family.base
    if target_action is None:
        target_action = stackelberg(base, idx).leader_action
    other_action = 1 - target_action
    payoffs = base.payoffs(idx)
    truth = family.truth()

    def cell_of(own: int, opp: int) -> str:
        i, j = (own, opp) if idx == ROW else (opp, own)
        return next(name for name, pos in CELL_INDEX.items() if pos == (i, j))

    def value(own: int, opp: int) -> float:
        return float(payoffs[(own, opp)] if idx == ROW else payoffs[(opp, own)])

    if all(value(target_action, opp) > value(other_action, opp) for opp in (0, 1)):
        return DominantDeclaration(truth, True, 'already dominant')

    free = family.free_cells[idx]
    declared = dict(zip(free, truth[idx]))
    bounds = dict(zip(free, family.bounds[idx]))
    label = '1' if idx == ROW else '2'
    for opp in (0, 1):
        high, low = cell_of(target_action, opp), cell_of(other_action, opp)
        high_val = declared.get(high, value(target_action, opp))
        low_val = declared.get(low, value(other_action, opp))
        if high_val > low_val:
            continue
        if high in declared:
            needed = low_val + margin
            if needed <= bounds[high][1]:
                declared[high] = needed
                continue
        if low in declared:
            needed = high_val - margin
            if needed >= bounds[low][0]:
                declared[low] = needed
                continue
        constraint = f'{high}{label} > {low}{label}'
        logger.info('Dominant declaration for player %d infeasible: %s cannot be met', idx, constraint)
        return DominantDeclaration(None, False, constraint)

    decl = truth.with_player(idx, [declared[name] for name in free])
    if not family.contains(decl):
        return DominantDeclaration(None, False, 'declaration violates the parameter space')
    return DominantDeclaration(decl, True, '')


class EpsilonCertificate(NamedTuple):
    utilities: Tuple[float, float]
    gains: Tuple[float, float]
    deviations: Tuple[Optional[Declaration], Optional[Declaration]]
    gain: float
    passed: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            'utilities': list(self.utilities),
            'gains': list(self.gains),
            'deviations': [d.to_json() if d is not None else None for d in self.deviations],
            'epsilon': self.gain,
            'passed': self.passed,
        }


def epsilon_equilibrium_check(scn: MetaGameScenario, decl: Declaration, eps: float) -> EpsilonCertificate:
    """
    Largest gain any player obtains by a unilateral deviation on its
    declaration grid; the profile is an eps-equilibrium (grid-relative) when
    that gain is at most eps.
    """
    utilities = meta_utility(scn, decl)
    gains, deviations = [], []
    for idx in (ROW, COL):
        best_value, best_decl = utilities[idx], None
        for vec in scn.grids[idx]:
            trial = decl.with_player(idx, vec)
            try:
                value = meta_utility(scn, trial)[idx]
            except (DegenerateGameError, NoUniqueEquilibriumError) as exc:
                logger.debug('Skipping grid point %s: %s', trial.to_json(), exc)
                continue
            if value > best_value:
                best_value, best_decl = value, trial
        gains.append(best_value - utilities[idx])
        deviations.append(best_decl)
    gain = max(gains)
    logger.debug('Certificate for %s: gains %s', decl.to_json(), gains)
    return EpsilonCertificate(utilities, (gains[0], gains[1]), (deviations[0], deviations[1]),
                              gain, gain <= eps)


class FixedPointResult(NamedTuple):
    declaration: Declaration
    iterations: int
    converged: bool
    cycle: bool


def iterated_best_response(scn: MetaGameScenario, start: Optional[Declaration] = None,
                           max_iterations: int = MAX_ITERATIONS) -> FixedPointResult:
    """
    Alternate best responses from `start` (default truth) until no player
    moves; a repeated profile is reported as a cycle.
    """
    decl = scn.truth if start is None else start
    seen = {decl}
    for iteration in range(1, max_iterations + 1):
        moved = False
        for idx in (ROW, COL):
            response = best_response(scn, idx, decl)
            current = meta_utility(scn, decl)[idx]
            if response.utility > current + UTILITY_TOL:
                decl = response.declaration
                moved = True
        if not moved:
            logger.info('Best-response iteration converged after %d rounds at %s', iteration, decl.to_json())
            return FixedPointResult(decl, iteration, True, False)
        if decl in seen:
            logger.warning('Best-response iteration cycles at %s', decl.to_json())
            return FixedPointResult(decl, iteration, False, True)
        seen.add(decl)
    return FixedPointResult(decl, max_iterations, False, False)
