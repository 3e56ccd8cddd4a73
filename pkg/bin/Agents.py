'''
Learning agents with a uniform act/observe interface under full-information
feedback: multiplicative weights, follow the perturbed leader, unconditional
regret matching, projected online gradient descent (Cournot quantities) and
the deterministic schedule agents that realize a rational CCE cycle by cycle.
'''
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from Equilibrium import cce_violation
from GameCore import (ROW, BimatrixGame, CournotScenario,
                      DimensionMismatchError, JointDistribution, player_index)
from utils import get_float


logger = logging.getLogger(__name__)

MW_ETA = get_float('DYNAMICS', 'mwEta')
FTPL_ETA = get_float('DYNAMICS', 'ftplEta')
CCE_TOL = get_float('TOLERANCES', 'cce')

ALGORITHMS = ('mw', 'ftpl', 'rm', 'ogd', 'schedule', 'oscillate')
RationalMatrix = Tuple[Tuple[Fraction, ...], ...]


class ScheduleError(ValueError):
    """A schedule distribution is not rational, not a CCE, or alpha is invalid."""


def to_fraction(value: Any, max_denominator: int = 10**6) -> Fraction:
    """
    Exact rational for a schedule entry. Strings ("1/3") and ints are exact;
    floats must be recoverable from a bounded denominator.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ScheduleError(f'Schedule entry {value!r} is not a rational number.')
    value = float(value)
    if not math.isfinite(value):
        raise ScheduleError(f'Schedule entry {value!r} is not finite.')
    frac = Fraction(value).limit_denominator(max_denominator)
    if abs(float(frac) - value) > 1e-12:
        raise ScheduleError(
            f'Schedule entry {value!r} has no small-denominator rational form; '
            'irrational distributions have no finite cycle.'
        )
    return frac


def rational_matrix(values: Any) -> RationalMatrix:
    if isinstance(values, JointDistribution):
        values = values.probs.tolist()
    matrix = tuple(tuple(to_fraction(v) for v in row) for row in values)
    if not matrix or len({len(row) for row in matrix}) != 1:
        raise DimensionMismatchError('Schedule distribution must be a non-empty rectangular matrix.')
    if any(v < 0 for row in matrix for v in row):
        raise ScheduleError('Schedule distribution has negative entries.')
    if sum(v for row in matrix for v in row) != 1:
        raise ScheduleError('Schedule distribution must sum to exactly 1.')
    return matrix


def as_joint(matrix: RationalMatrix) -> JointDistribution:
    return JointDistribution(np.array([[float(v) for v in row] for row in matrix]))


@dataclass(frozen=True)
class AgentSpec:
    """
    Algorithm tag plus hyperparameters. `eta` is the MW step or the FTPL
    effective rate, `step0` the OGD base step (defaults to q_max / 2),
    `dist`/`dist2` the schedule targets and `alpha` the oscillation base.
    """
    algo: str
    eta: Optional[float] = None
    step0: Optional[float] = None
    dist: Optional[RationalMatrix] = None
    dist2: Optional[RationalMatrix] = None
    alpha: Optional[int] = None

    def __post_init__(self):
        algo = self.algo.lower()
        if algo not in ALGORITHMS:
            raise ValueError(f'Unknown algorithm {self.algo!r}; expected one of {ALGORITHMS}.')
        object.__setattr__(self, 'algo', algo)
        if self.eta is not None:
            if not self.eta > 0:
                raise ValueError(f'{algo} requires eta > 0, got {self.eta!r}.')
            object.__setattr__(self, 'eta', float(self.eta))
        if algo == 'ogd' and self.step0 is not None and not self.step0 > 0:
            raise ValueError(f'OGD base step must be positive, got {self.step0!r}.')
        if algo in ('schedule', 'oscillate'):
            if self.dist is None:
                raise ScheduleError(f'{algo} requires a target distribution.')
            object.__setattr__(self, 'dist', rational_matrix(self.dist))
        if algo == 'oscillate':
            if self.dist2 is None:
                raise ScheduleError('oscillate requires a second distribution.')
            dist2 = rational_matrix(self.dist2)
            if len(dist2) != len(self.dist) or len(dist2[0]) != len(self.dist[0]):
                raise DimensionMismatchError('Oscillating distributions differ in shape.')
            object.__setattr__(self, 'dist2', dist2)
            if not isinstance(self.alpha, (int, np.integer)) or isinstance(self.alpha, bool) or self.alpha < 1:
                raise ScheduleError(f'alpha must be an integer >= 1, got {self.alpha!r}.')

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'algo': self.algo}
        if self.eta is not None:
            data['eta'] = self.eta
        if self.step0 is not None:
            data['step0'] = self.step0
        for key in ('dist', 'dist2'):
            matrix = getattr(self, key)
            if matrix is not None:
                data[key] = [[str(v) for v in row] for row in matrix]
        if self.alpha is not None:
            data['alpha'] = int(self.alpha)
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'AgentSpec':
        unknown = set(data) - {'algo', 'eta', 'step0', 'dist', 'dist2', 'alpha'}
        if unknown:
            raise ValueError(f'Unknown agent spec keys: {sorted(unknown)}')
        return cls(
            algo=data['algo'],
            eta=data.get('eta'),
            step0=data.get('step0'),
            dist=data.get('dist'),
            dist2=data.get('dist2'),
            alpha=data.get('alpha'),
        )


def own_payoffs(game: BimatrixGame, player: int) -> np.ndarray:
    """A player's payoffs arranged as (own action, opponent action)."""
    return game.u1 if player == ROW else game.u2.T


def normalize_payoffs(payoffs: np.ndarray) -> np.ndarray:
    lo, hi = payoffs.min(), payoffs.max()
    if hi - lo <= 0:
        return np.zeros_like(payoffs, dtype=float)
    return (payoffs - lo) / (hi - lo)


def sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side='right'))
    return min(idx, probs.size - 1)


class Agent():
    """
    Base class for finite-action agents. `observe` receives the joint action
    (row action, column action) of the round.
    """
    def __init__(self, payoffs: np.ndarray, player: int, rng: np.random.Generator):
        self.player = player
        self.payoffs = normalize_payoffs(np.asarray(payoffs, dtype=float))
        self.n_actions = self.payoffs.shape[0]
        self.rng = rng

    def act(self, t: int) -> int:
        raise NotImplementedError

    def observe(self, t: int, joint: Tuple[int, int]) -> None:
        raise NotImplementedError

    def counterfactuals(self, joint: Tuple[int, int]) -> np.ndarray:
        return self.payoffs[:, joint[1 - self.player]]


class MWAgent(Agent):
    def __init__(self, payoffs, player, rng, eta: float = MW_ETA):
        super().__init__(payoffs, player, rng)
        self.eta = eta
        self.log_weights = np.zeros(self.n_actions)

    def strategy(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def act(self, t: int) -> int:
        return sample(self.strategy(), self.rng)

    def observe(self, t: int, joint: Tuple[int, int]) -> None:
        # w <- w * exp(eta * u), kept in log space
        self.log_weights += self.eta * self.counterfactuals(joint)


class FTPLAgent(Agent):
    """Perturbation is i.i.d. uniform on [0, sqrt(T) / eta] per action and round."""
    def __init__(self, payoffs, player, rng, horizon: int, eta: float = FTPL_ETA):
        super().__init__(payoffs, player, rng)
        self.scale = math.sqrt(max(horizon, 1)) / eta
        self.cumulative = np.zeros(self.n_actions)

    def act(self, t: int) -> int:
        noise = self.rng.uniform(0.0, self.scale, size=self.n_actions)
        return int(np.argmax(self.cumulative + noise))

    def observe(self, t: int, joint: Tuple[int, int]) -> None:
        self.cumulative += self.counterfactuals(joint)


class RegretMatchingAgent(Agent):
    def __init__(self, payoffs, player, rng):
        super().__init__(payoffs, player, rng)
        self.regrets = np.zeros(self.n_actions)

    def strategy(self) -> np.ndarray:
        positive = np.maximum(self.regrets, 0.0)
        total = positive.sum()
        if total <= 0:
            return np.full(self.n_actions, 1.0 / self.n_actions)
        return positive / total

    def act(self, t: int) -> int:
        return sample(self.strategy(), self.rng)

    def observe(self, t: int, joint: Tuple[int, int]) -> None:
        cf = self.counterfactuals(joint)
        self.regrets += cf - cf[joint[self.player]]


@dataclass(frozen=True)
class Schedule:
    """
    One cycle of deterministic play: profiles (flat indices) in order of
    decreasing probability, each held for `lengths[k]` rounds.
    """
    shape: Tuple[int, int]
    profiles: Tuple[int, ...]
    lengths: Tuple[int, ...]
    ends: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'ends', tuple(int(x) for x in np.cumsum(self.lengths)))

    @property
    def tau(self) -> int:
        return self.ends[-1]

    def profile_at(self, t: int) -> Tuple[int, int]:
        """Joint action of round t (1-based)."""
        pos = (t - 1) % self.tau
        k = int(np.searchsorted(self.ends, pos, side='right'))
        return divmod(self.profiles[k], self.shape[1])

    def counts_at(self, t: int) -> np.ndarray:
        """Profile counts after t rounds of on-schedule play."""
        full, rem = divmod(t, self.tau)
        counts = np.zeros(self.shape[0] * self.shape[1], dtype=np.int64)
        starts = (0,) + self.ends[:-1]
        for flat, length, start in zip(self.profiles, self.lengths, starts):
            counts[flat] += full * length + min(max(rem - start, 0), length)
        return counts.reshape(self.shape)

    def flat_log(self, t: int) -> np.ndarray:
        cycle = np.repeat(np.array(self.profiles, dtype=np.int64), self.lengths)
        return cycle[np.arange(t) % self.tau]


def build_schedule(dist: RationalMatrix) -> Schedule:
    """
    Cycle length tau = (support size) * lcm(denominators) and T_k = Pr(a^k) * tau,
    so one cycle reproduces the distribution exactly. Profiles are ordered by
    decreasing probability, ties by higher flat index.
    """
    shape = (len(dist), len(dist[0]))
    flat = [(v, idx) for idx, v in enumerate(v for row in dist for v in row) if v > 0]
    flat.sort(key=lambda item: (item[0], item[1]), reverse=True)
    lcm = reduce(lambda x, y: x * y // math.gcd(x, y), (v.denominator for v, _ in flat), 1)
    tau = len(flat) * lcm
    lengths = tuple(int(v * tau) for v, _ in flat)
    return Schedule(shape, tuple(idx for _, idx in flat), lengths)


class ScheduleAgent(Agent):
    """
    Plays its part of the cycle while every observed profile matches the
    schedule; after the first mismatch it hands over to a fresh unconditional
    regret-matching agent on the same random stream.
    """
    def __init__(self, payoffs, player, rng, schedule: Schedule):
        super().__init__(payoffs, player, rng)
        if schedule.shape[player] != self.n_actions:
            raise DimensionMismatchError(
                f'Schedule shape {schedule.shape} does not fit player {player} with {self.n_actions} actions.'
            )
        self.raw_payoffs = np.asarray(payoffs, dtype=float)
        self.schedule = schedule
        self.deviated = False
        self.fallback: Optional[RegretMatchingAgent] = None

    def profile_at(self, t: int) -> Tuple[int, int]:
        return self.schedule.profile_at(t)

    def counts_at(self, t: int) -> np.ndarray:
        return self.schedule.counts_at(t)

    def flat_log(self, t: int) -> np.ndarray:
        """Flat profile indices of rounds 1..t under on-schedule play."""
        return self.schedule.flat_log(t)

    def act(self, t: int) -> int:
        if self.deviated:
            return self.fallback.act(t)
        return int(self.profile_at(t)[self.player])

    def observe(self, t: int, joint: Tuple[int, int]) -> None:
        if not self.deviated and tuple(joint) != tuple(self.profile_at(t)):
            logger.info('Player %d saw off-schedule play %s at round %d; switching to regret matching',
                        self.player, tuple(joint), t)
            self.deviated = True
            self.fallback = RegretMatchingAgent(self.raw_payoffs, self.player, self.rng)
        if self.deviated:
            self.fallback.observe(t, joint)


class OscillatingScheduleAgent(ScheduleAgent):
    """
    Phase c (c = 1, 2, ...) lasts (2 alpha)^c full cycles of the active schedule;
    odd phases follow the first distribution, even phases the second.
    """
    def __init__(self, payoffs, player, rng, first: Schedule, second: Schedule, alpha: int):
        super().__init__(payoffs, player, rng, first)
        if second.shape != first.shape:
            raise DimensionMismatchError('Oscillating schedules differ in shape.')
        self.schedules = (first, second)
        self.alpha = alpha
        self._ends: List[int] = []

    def phase_schedule(self, phase: int) -> Schedule:
        return self.schedules[(phase - 1) % 2]

    def phase_end(self, phase: int) -> int:
        """Last round of phase `phase` (1-based)."""
        while len(self._ends) < phase:
            c = len(self._ends) + 1
            start = self._ends[-1] if self._ends else 0
            self._ends.append(start + self.phase_schedule(c).tau * (2 * self.alpha) ** c)
        return self._ends[phase - 1]

    def phase_of(self, t: int) -> Tuple[int, int]:
        """(phase, first round of that phase) for round t."""
        phase = 1
        while self.phase_end(phase) < t:
            phase += 1
        start = self.phase_end(phase - 1) + 1 if phase > 1 else 1
        return phase, start

    def profile_at(self, t: int) -> Tuple[int, int]:
        phase, start = self.phase_of(t)
        return self.phase_schedule(phase).profile_at(t - start + 1)

    def counts_at(self, t: int) -> np.ndarray:
        counts = np.zeros(self.schedules[0].shape, dtype=np.int64)
        if t <= 0:
            return counts
        phase, start = self.phase_of(t)
        for c in range(1, phase):
            length = self.phase_end(c) - (self.phase_end(c - 1) if c > 1 else 0)
            counts += self.phase_schedule(c).counts_at(length)
        counts += self.phase_schedule(phase).counts_at(t - start + 1)
        return counts

    def flat_log(self, t: int) -> np.ndarray:
        if t <= 0:
            return np.zeros(0, dtype=np.int64)
        phase, start = self.phase_of(t)
        parts = []
        for c in range(1, phase):
            length = self.phase_end(c) - (self.phase_end(c - 1) if c > 1 else 0)
            parts.append(self.phase_schedule(c).flat_log(length))
        parts.append(self.phase_schedule(phase).flat_log(t - start + 1))
        return np.concatenate(parts)


class OGDAgent():
    """
    Projected online gradient ascent on a Cournot quantity in [0, a/b] with
    step step0 / sqrt(t). The gradient is taken at the declared cost.
    """
    def __init__(self, scn: CournotScenario, player: int, declared_cost: float,
                 step0: Optional[float] = None, start: float = 0.0):
        self.scn = scn
        self.player = player
        self.cost = declared_cost
        self.q_max = scn.q_max
        self.step0 = step0 if step0 is not None else self.q_max / 2.0
        self.point = min(max(start, 0.0), self.q_max)

    def act(self, t: int) -> float:
        return self.point

    def gradient(self, quantities: Sequence[float]) -> float:
        own, other = quantities[self.player], quantities[1 - self.player]
        return self.scn.a - 2.0 * self.scn.b * own - self.scn.b * other - self.cost

    def observe(self, t: int, quantities: Sequence[float]) -> None:
        step = self.step0 / math.sqrt(t)
        self.point = min(max(self.point + step * self.gradient(quantities), 0.0), self.q_max)


def make_agent(spec: AgentSpec, game: BimatrixGame, player: Union[int, str],
               horizon: int, rng: np.random.Generator) -> Agent:
    """Initialize the state of a finite-game agent for one player."""
    idx = player_index(player)
    payoffs = own_payoffs(game, idx)
    if spec.algo == 'mw':
        return MWAgent(payoffs, idx, rng, eta=spec.eta or MW_ETA)
    if spec.algo == 'ftpl':
        return FTPLAgent(payoffs, idx, rng, horizon=horizon, eta=spec.eta or FTPL_ETA)
    if spec.algo == 'rm':
        return RegretMatchingAgent(payoffs, idx, rng)
    if spec.algo in ('schedule', 'oscillate'):
        first = build_schedule(spec.dist)
        if first.shape != game.shape:
            raise DimensionMismatchError(f'Schedule shape {first.shape} does not match game {game.shape}.')
        if spec.algo == 'schedule':
            return ScheduleAgent(payoffs, idx, rng, first)
        return OscillatingScheduleAgent(payoffs, idx, rng, first, build_schedule(spec.dist2), spec.alpha)
    raise ValueError(f'Algorithm {spec.algo!r} does not play finite games; use the Cournot dynamics.')


def alpha_for_epsilon(eps: float) -> int:
    if not 0 < eps < 1:
        raise ValueError(f'epsilon must lie in (0, 1), got {eps!r}.')
    return math.ceil(1.0 / eps ** 2 - 1e-9)


def make_oscillating_schedule(game: BimatrixGame, dist1: Any, dist2: Any, alpha: int,
                              tol: float = CCE_TOL) -> AgentSpec:
    """
    Spec of an agent alternating between two rational CCEs of `game` with
    phase lengths growing as (2 alpha)^c cycles.
    :raises ScheduleError: non-rational entries, a distribution that is not a CCE,
        or a bad alpha.
    """
    first, second = rational_matrix(dist1), rational_matrix(dist2)
    for name, matrix in (('dist1', first), ('dist2', second)):
        joint = as_joint(matrix)
        if joint.shape != game.shape:
            raise DimensionMismatchError(f'{name} shape {joint.shape} does not match game {game.shape}.')
        violation = cce_violation(game, joint)
        if violation > tol:
            raise ScheduleError(f'{name} is not a CCE of {game.name or "the game"}: violation {violation:.3g}.')
    return AgentSpec('oscillate', dist=first, dist2=second, alpha=alpha)


def regrets_from_counts(game: BimatrixGame, counts: np.ndarray) -> Tuple[float, float]:
    """
    Cumulative external regret of both players given joint-profile counts:
    max_a sum_t u_i(a, a_-i^t) - sum_t u_i(a^t).
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != game.shape:
        raise DimensionMismatchError(f'Counts shape {counts.shape} does not match game {game.shape}.')
    realized1, realized2 = (counts * game.u1).sum(), (counts * game.u2).sum()
    best1 = (game.u1 @ counts.sum(axis=0)).max()
    best2 = (counts.sum(axis=1) @ game.u2).max()
    return float(best1 - realized1), float(best2 - realized2)


def external_regret(game: BimatrixGame, history: Sequence[Tuple[int, int]], player: Union[int, str]) -> float:
    """Hindsight regret of one player over a joint-action history (0 when empty)."""
    history = np.asarray(history, dtype=np.int64)
    if history.size == 0:
        return 0.0
    if history.ndim != 2 or history.shape[1] != 2:
        raise DimensionMismatchError(f'History must have shape (T, 2), got {history.shape}.')
    counts = np.zeros(game.shape, dtype=np.int64)
    np.add.at(counts, (history[:, 0], history[:, 1]), 1)
    return regrets_from_counts(game, counts)[player_index(player)]
