'''
Closed-form and combinatorial equilibrium solvers: mixed NE of 2x2 games,
pure NE enumeration, iterated strict dominance, pure-commitment Stackelberg
outcomes, the coarse-correlated-equilibrium violation functional and the
linear Cournot duopoly.
'''
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from GameCore import (COL, DEGENERATE_TOL, ROW, BimatrixGame, CournotScenario,
                      DegenerateGameError, DimensionMismatchError,
                      JointDistribution, MixedProfile, player_index)


logger = logging.getLogger(__name__)

ORDER_POLICIES = ('row-first', 'col-first')


class NoUniqueEquilibriumError(ValueError):
    """A declared game has no closed-form unique CCE (neither dominance-solvable nor fully mixed)."""


def mixed_ne_2x2(game: BimatrixGame) -> Optional[MixedProfile]:
    """
    Mixed Nash equilibrium of a 2x2 game from the indifference conditions:
        p = (D2 - C2) / (A2 - B2 + D2 - C2)
        q = (D1 - B1) / (A1 - C1 + D1 - B1)
    :return: The profile when both values land in [0, 1], else None.
    :raises DegenerateGameError: when either denominator vanishes.
    """
    game.require_2x2()
    a1, b1, c1, d1 = (game.cell(ROW, k) for k in 'ABCD')
    a2, b2, c2, d2 = (game.cell(COL, k) for k in 'ABCD')
    den_p = a2 - b2 + d2 - c2
    den_q = a1 - c1 + d1 - b1
    if abs(den_p) < DEGENERATE_TOL or abs(den_q) < DEGENERATE_TOL:
        raise DegenerateGameError(
            f'Degenerate (weak-dominance) game: denominators {den_p!r}, {den_q!r} for {game!r}'
        )
    p = (d2 - c2) / den_p
    q = (d1 - b1) / den_q
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        return None
    return MixedProfile.from_pq(p, q)


def is_fully_mixed_2x2(game: BimatrixGame) -> bool:
    """True when the game's mixed NE lies strictly inside (0, 1)^2."""
    try:
        profile = mixed_ne_2x2(game)
    except DegenerateGameError:
        return False
    return profile is not None and 0.0 < profile.p < 1.0 and 0.0 < profile.q < 1.0


def pure_ne(game: BimatrixGame) -> List[Tuple[int, int]]:
    """All pure profiles where each action is a best reply to the other."""
    row_best = game.u1 >= game.u1.max(axis=0, keepdims=True)
    col_best = game.u2 >= game.u2.max(axis=1, keepdims=True)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(row_best & col_best))]


class EliminationStep(NamedTuple):
    player: int
    eliminated: int
    dominator: int


@dataclass(frozen=True)
class EliminationTrace:
    """
    Ordered strict eliminations (indices into the original game) and the
    surviving actions of each player.
    """
    steps: Tuple[EliminationStep, ...]
    rows: Tuple[int, ...]
    cols: Tuple[int, ...]

    @property
    def is_singleton(self) -> bool:
        return len(self.rows) == 1 and len(self.cols) == 1

    @property
    def profile(self) -> Tuple[int, int]:
        if not self.is_singleton:
            raise ValueError(f'Surviving subgame is {len(self.rows)}x{len(self.cols)}, not a single profile.')
        return self.rows[0], self.cols[0]

    def subgame(self, game: BimatrixGame) -> BimatrixGame:
        idx = np.ix_(self.rows, self.cols)
        return BimatrixGame(game.u1[idx], game.u2[idx], name=game.name)

    def to_json(self) -> dict:
        return {
            'steps': [step._asdict() for step in self.steps],
            'rows': list(self.rows),
            'cols': list(self.cols),
        }


def _find_dominated(payoffs: np.ndarray, own: List[int], other: List[int], player: int):
    # Payoffs arranged as (own action, opponent action).
    for action in own:
        for dominator in own:
            if dominator == action:
                continue
            if player == ROW:
                gap = payoffs[dominator, other] - payoffs[action, other]
            else:
                gap = payoffs[other, dominator] - payoffs[other, action]
            if np.all(gap > 0):
                return action, dominator
    return None


def iterated_elimination(game: BimatrixGame, order_policy: str = 'row-first') -> EliminationTrace:
    """
    Repeatedly remove one strictly dominated pure action (pure dominators only),
    scanning players in policy order and actions by lowest index, until no
    action is dominated.
    """
    if order_policy not in ORDER_POLICIES:
        raise ValueError(f'Unknown order policy {order_policy!r}; expected one of {ORDER_POLICIES}.')
    players = (ROW, COL) if order_policy == 'row-first' else (COL, ROW)
    surviving = [list(range(game.m)), list(range(game.n))]
    steps: List[EliminationStep] = []
    while True:
        removed = False
        for player in players:
            if len(surviving[player]) < 2:
                continue
            found = _find_dominated(
                game.payoffs(player), surviving[player], surviving[1 - player], player
            )
            if found is not None:
                action, dominator = found
                surviving[player].remove(action)
                steps.append(EliminationStep(player, action, dominator))
                logger.debug('Player %d: action %d strictly dominated by %d', player, action, dominator)
                removed = True
                break
        if not removed:
            break
    return EliminationTrace(tuple(steps), tuple(surviving[ROW]), tuple(surviving[COL]))


def is_dominance_solvable(game: BimatrixGame) -> bool:
    return iterated_elimination(game).is_singleton


def has_unique_cce(game: BimatrixGame) -> bool:
    """
    Closed-form uniqueness: strictly dominance-solvable, or a fully mixed NE
    with no pure NE beside it.
    """
    if is_dominance_solvable(game):
        return True
    return is_fully_mixed_2x2(game) and not pure_ne(game)


class StackelbergOutcome(NamedTuple):
    leader_action: int
    follower_action: int
    leader_value: float


def stackelberg(game: BimatrixGame, leader: Union[int, str] = ROW) -> StackelbergOutcome:
    """
    Pure-commitment Stackelberg outcome. The follower best-replies to the
    committed action, breaking ties in the leader's favor; leader ties go to
    the lowest action index.
    """
    lead = player_index(leader)
    if lead == ROW:
        lead_pay, follow_pay = game.u1, game.u2
    else:
        lead_pay, follow_pay = game.u2.T, game.u1.T
    best: Optional[StackelbergOutcome] = None
    for action in range(lead_pay.shape[0]):
        replies = np.flatnonzero(follow_pay[action] >= follow_pay[action].max())
        reply = int(replies[np.argmax(lead_pay[action, replies])])
        value = float(lead_pay[action, reply])
        if best is None or value > best.leader_value:
            best = StackelbergOutcome(action, reply, value)
    return best


def deviation_gains(game: BimatrixGame, dist: JointDistribution) -> Tuple[float, float]:
    """
    Per-player best fixed-action gain E[u_i(a, a_-i)] - E[u_i] under a joint
    distribution.
    """
    if dist.shape != game.shape:
        raise DimensionMismatchError(f'Distribution shape {dist.shape} does not match game {game.shape}.')
    probs = dist.probs
    row_marg, col_marg = probs.sum(axis=1), probs.sum(axis=0)
    row_gain = float((game.u1 @ col_marg).max() - (probs * game.u1).sum())
    col_gain = float((row_marg @ game.u2).max() - (probs * game.u2).sum())
    return row_gain, col_gain


def cce_violation(game: BimatrixGame, dist: JointDistribution) -> float:
    """
    Largest unilateral fixed-action gain over both players; <= 0 exactly for
    coarse correlated equilibria.
    """
    return max(deviation_gains(game, dist))


class CournotOutcome(NamedTuple):
    q1: float
    q2: float
    price: float
    u1: float
    u2: float
    region: str

    def to_json(self) -> dict:
        return self._asdict()


def cournot_quantities(scn: CournotScenario, costs: Sequence[float]) -> Tuple[float, float, str]:
    """
    Equilibrium quantities for the stated costs and the region they fall in:
    A both produce, B firm 1 alone, C firm 2 alone, D nobody produces.
    Boundaries resolve to the region A formula whenever it is non-negative.
    """
    a, b = scn.a, scn.b
    c1, c2 = (min(max(float(c), 0.0), a) for c in costs)
    lead1 = a + c2 - 2.0 * c1
    lead2 = a + c1 - 2.0 * c2
    if lead1 >= 0.0 and lead2 >= 0.0 and c1 < a and c2 < a:
        return lead1 / (3.0 * b), lead2 / (3.0 * b), 'A'
    if lead2 < 0.0 and c1 < a:
        return (a - c1) / (2.0 * b), 0.0, 'B'
    if lead1 < 0.0 and c2 < a:
        return 0.0, (a - c2) / (2.0 * b), 'C'
    return 0.0, 0.0, 'D'


def _outcome(scn: CournotScenario, q1: float, q2: float, region: str, costs: Sequence[float]) -> CournotOutcome:
    price = scn.a - scn.b * (q1 + q2)
    return CournotOutcome(q1, q2, price, q1 * (price - costs[0]), q2 * (price - costs[1]), region)


def cournot_ne(scn: CournotScenario, costs: Optional[Sequence[float]] = None) -> CournotOutcome:
    """Nash equilibrium of the duopoly at the given (default: true) costs."""
    costs = scn.costs if costs is None else tuple(float(c) for c in costs)
    if min(costs) < 0:
        raise ValueError(f'Costs must be non-negative, got {costs}.')
    q1, q2, region = cournot_quantities(scn, costs)
    return _outcome(scn, q1, q2, region, costs)


def cournot_outcome_at(scn: CournotScenario, declared_costs: Sequence[float],
                       true_costs: Optional[Sequence[float]] = None) -> CournotOutcome:
    """
    Agents play the NE of the declared game; the outcome is priced truly and
    costed at the true costs. Declarations above a are clamped to a.
    """
    true_costs = scn.costs if true_costs is None else tuple(true_costs)
    declared = tuple(min(max(float(x), 0.0), scn.a) for x in declared_costs)
    q1, q2, region = cournot_quantities(scn, declared)
    return _outcome(scn, q1, q2, region, true_costs)


def cournot_utilities_at(scn: CournotScenario, true_costs: Sequence[float],
                         declared_costs: Sequence[float]) -> Tuple[float, float]:
    outcome = cournot_outcome_at(scn, declared_costs, true_costs)
    return outcome.u1, outcome.u2
