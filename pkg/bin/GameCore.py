'''
Game representations, parameterized game families (declaration -> game) and
exact expected-utility evaluation.

2x2 cell naming follows the usual outcome letters:

        left  right
  top    A     B
  bottom C     D

Subscript 1 is the row player's payoff, subscript 2 the column player's.
'''
import itertools
import logging
import math
from dataclasses import dataclass
from typing import (Any, Dict, List, NamedTuple, Optional,
                    Sequence, Tuple, Union)

import numpy as np

from utils import get_float


logger = logging.getLogger(__name__)

PROB_TOL = get_float('TOLERANCES', 'probability')
DEGENERATE_TOL = get_float('TOLERANCES', 'degenerate')

ROW, COL = 0, 1
PLAYER_KEYS = ('row', 'col')
CELL_INDEX: Dict[str, Tuple[int, int]] = {
    'A': (0, 0),
    'B': (0, 1),
    'C': (1, 0),
    'D': (1, 1),
}


class DimensionMismatchError(ValueError):
    """Shapes of a game, profile or distribution disagree."""


class DeclarationError(ValueError):
    """A declaration lies outside its parameter space, or a family is malformed."""


class DegenerateGameError(ValueError):
    """A closed form hits a zero denominator (weak-dominance ties)."""


class NotOpposingInterestsError(ValueError):
    """An opposing-interests solver was handed some other kind of game."""


def player_index(player: Union[int, str]) -> int:
    """
    Normalize a player reference ('row'/'col', 0/1, 1/2 is NOT accepted) to 0 or 1.
    """
    if player in (ROW, COL):
        return int(player)
    if isinstance(player, str) and player.lower() in PLAYER_KEYS:
        return PLAYER_KEYS.index(player.lower())
    raise ValueError(f'Unknown player {player!r}; expected "row", "col", 0 or 1.')


def _as_matrix(values: Any, name: str) -> np.ndarray:
    matrix = np.array(values, dtype=float)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f'{name} must be a 2D matrix, got shape {matrix.shape}.')
    if matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise DimensionMismatchError(f'{name} must have at least one row and column.')
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f'{name} contains non-finite entries.')
    matrix.setflags(write=False)
    return matrix


class BimatrixGame():
    """
    Finite two-player game in normal form.
    :param u1: m x n payoff matrix of the row player.
    :type u1: array-like
    :param u2: m x n payoff matrix of the column player.
    :type u2: array-like
    :param name: Optional label used in logs and exports.
    :type name: str
    """
    def __init__(self, u1: Any, u2: Any, name: str = ''):
        self.u1 = _as_matrix(u1, 'u1')
        self.u2 = _as_matrix(u2, 'u2')
        if self.u1.shape != self.u2.shape:
            raise DimensionMismatchError(
                f'Payoff matrices differ in shape: u1 {self.u1.shape}, u2 {self.u2.shape}.'
            )
        self.name = name

    @property
    def m(self) -> int:
        return self.u1.shape[0]

    @property
    def n(self) -> int:
        return self.u1.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u1.shape

    @property
    def is_2x2(self) -> bool:
        return self.shape == (2, 2)

    def payoffs(self, player: Union[int, str]) -> np.ndarray:
        return self.u1 if player_index(player) == ROW else self.u2

    def cell(self, player: Union[int, str], name: str) -> float:
        """Payoff of a player at a named 2x2 outcome ('A'..'D')."""
        self.require_2x2()
        i, j = CELL_INDEX[name]
        return float(self.payoffs(player)[i, j])

    def require_2x2(self) -> None:
        if not self.is_2x2:
            raise DimensionMismatchError(f'Expected a 2x2 game, got {self.m}x{self.n}.')

    def to_json(self) -> Dict[str, Any]:
        return {
            'rows': self.m,
            'cols': self.n,
            'u1': self.u1.tolist(),
            'u2': self.u2.tolist(),
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'BimatrixGame':
        game = cls(data['u1'], data['u2'], name=data.get('name', ''))
        rows, cols = data.get('rows', game.m), data.get('cols', game.n)
        if (rows, cols) != game.shape:
            raise DimensionMismatchError(
                f'Declared size {rows}x{cols} does not match payoff matrices {game.m}x{game.n}.'
            )
        return game

    def __eq__(self, other):
        if not isinstance(other, BimatrixGame):
            return NotImplemented
        return np.array_equal(self.u1, other.u1) and np.array_equal(self.u2, other.u2)

    def __hash__(self):
        return hash((self.u1.tobytes(), self.u2.tobytes()))

    def __repr__(self) -> str:
        label = f' {self.name!r}' if self.name else ''
        return f'BimatrixGame{label}(u1={self.u1.tolist()}, u2={self.u2.tolist()})'


def _check_probability_vector(vec: np.ndarray, name: str, tol: float) -> None:
    if vec.ndim != 1 or vec.size < 1:
        raise DimensionMismatchError(f'{name} must be a non-empty vector.')
    if np.any(vec < -tol) or np.any(vec > 1 + tol):
        raise ValueError(f'{name} has entries outside [0, 1]: {vec.tolist()}')
    if abs(vec.sum() - 1.0) > tol:
        raise ValueError(f'{name} sums to {vec.sum()!r}, expected 1.')


@dataclass(frozen=True, eq=False)
class MixedProfile:
    """
    Per-player mixed strategies. For 2x2 games p is the probability of the top
    row and q the probability of the left column.
    """
    row: np.ndarray
    col: np.ndarray

    def __post_init__(self):
        row = np.array(self.row, dtype=float)
        col = np.array(self.col, dtype=float)
        _check_probability_vector(row, 'row strategy', PROB_TOL)
        _check_probability_vector(col, 'column strategy', PROB_TOL)
        row.setflags(write=False)
        col.setflags(write=False)
        object.__setattr__(self, 'row', row)
        object.__setattr__(self, 'col', col)

    @classmethod
    def from_pq(cls, p: float, q: float) -> 'MixedProfile':
        return cls(np.array([p, 1.0 - p]), np.array([q, 1.0 - q]))

    @property
    def p(self) -> float:
        return float(self.row[0])

    @property
    def q(self) -> float:
        return float(self.col[0])

    def outer(self) -> 'JointDistribution':
        return JointDistribution(np.outer(self.row, self.col))

    def __repr__(self) -> str:
        if self.row.size == 2 and self.col.size == 2:
            return f'MixedProfile(p={self.p!r}, q={self.q!r})'
        return f'MixedProfile(row={self.row.tolist()}, col={self.col.tolist()})'


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """
    Probability mass over joint action profiles (an element of the simplex
    over A_1 x A_2).
    """
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise DimensionMismatchError(f'Joint distribution must be 2D, got shape {probs.shape}.')
        if np.any(probs < -PROB_TOL):
            raise ValueError(f'Joint distribution has negative mass: {probs.tolist()}')
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f'Joint distribution sums to {probs.sum()!r}, expected 1.')
        probs.setflags(write=False)
        object.__setattr__(self, 'probs', probs)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.probs.shape

    @classmethod
    def point_mass(cls, shape: Tuple[int, int], profile: Tuple[int, int]) -> 'JointDistribution':
        probs = np.zeros(shape)
        probs[profile] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, shape: Tuple[int, int]) -> 'JointDistribution':
        return cls(np.full(shape, 1.0 / (shape[0] * shape[1])))

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> 'JointDistribution':
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise ValueError('Cannot normalize an empty count matrix.')
        return cls(counts / total)

    def marginals(self) -> MixedProfile:
        return MixedProfile(self.probs.sum(axis=1), self.probs.sum(axis=0))

    def l1_distance(self, other: 'JointDistribution') -> float:
        if self.shape != other.shape:
            raise DimensionMismatchError(f'Shapes differ: {self.shape} vs {other.shape}.')
        return float(np.abs(self.probs - other.probs).sum())

    def tv_distance(self, other: 'JointDistribution') -> float:
        return 0.5 * self.l1_distance(other)

    def mix(self, other: 'JointDistribution', weight: float) -> 'JointDistribution':
        """weight * self + (1 - weight) * other"""
        if self.shape != other.shape:
            raise DimensionMismatchError(f'Shapes differ: {self.shape} vs {other.shape}.')
        return JointDistribution(weight * self.probs + (1.0 - weight) * other.probs)

    def to_json(self) -> List[List[float]]:
        return self.probs.tolist()

    def __repr__(self) -> str:
        return f'JointDistribution({self.probs.tolist()})'


@dataclass(frozen=True)
class Declaration:
    """
    One parameter vector per player. For 2x2 families the vectors hold the
    declared values of the player's free cells (in the family's cell order);
    for Cournot each player declares a single per-unit cost.
    """
    values: Tuple[Tuple[float, ...], Tuple[float, ...]]

    def __post_init__(self):
        if len(self.values) != 2:
            raise DeclarationError(f'Expected two per-player vectors, got {len(self.values)}.')
        normalized = tuple(tuple(float(v) for v in vec) for vec in self.values)
        for vec in normalized:
            if not all(math.isfinite(v) for v in vec):
                raise DeclarationError(f'Declaration has non-finite values: {normalized}')
        object.__setattr__(self, 'values', normalized)

    @classmethod
    def of(cls, row: Union[float, Sequence[float]], col: Union[float, Sequence[float]]) -> 'Declaration':
        def vec(x):
            return (x,) if isinstance(x, (int, float, np.floating, np.integer)) else tuple(x)
        return cls((vec(row), vec(col)))

    @property
    def row(self) -> Tuple[float, ...]:
        return self.values[ROW]

    @property
    def col(self) -> Tuple[float, ...]:
        return self.values[COL]

    def __getitem__(self, player: Union[int, str]) -> Tuple[float, ...]:
        return self.values[player_index(player)]

    def scalar(self, player: Union[int, str]) -> float:
        vec = self[player]
        if len(vec) != 1:
            raise DeclarationError(f'Player {player} declares {len(vec)} values, not a scalar.')
        return vec[0]

    def with_player(self, player: Union[int, str], values: Union[float, Sequence[float]]) -> 'Declaration':
        idx = player_index(player)
        if isinstance(values, (int, float, np.floating, np.integer)):
            values = (values,)
        new = list(self.values)
        new[idx] = tuple(values)
        return Declaration(tuple(new))

    def to_json(self) -> Dict[str, List[float]]:
        return {'row': list(self.row), 'col': list(self.col)}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'Declaration':
        return cls.of(data['row'], data['col'])


def _sign(x: float) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def best_reply_signs(game: BimatrixGame, player: Union[int, str]) -> Tuple[int, int]:
    """
    Signs that determine a player's best replies to the opponent's pure
    strategies in a 2x2 game: (A1-C1, B1-D1) for the row player and
    (A2-B2, C2-D2) for the column player.
    """
    game.require_2x2()
    if player_index(player) == ROW:
        a, b, c, d = (game.cell(ROW, k) for k in 'ABCD')
        return _sign(a - c), _sign(b - d)
    a, b, c, d = (game.cell(COL, k) for k in 'ABCD')
    return _sign(a - b), _sign(c - d)


def is_opposing_interests(game: BimatrixGame) -> bool:
    """
    True for 2x2 games where the row player strictly prefers the main diagonal
    outcomes and the column player the off-diagonal ones, or vice versa.
    """
    if not game.is_2x2:
        return False
    a1, b1, c1, d1 = (game.cell(ROW, k) for k in 'ABCD')
    a2, b2, c2, d2 = (game.cell(COL, k) for k in 'ABCD')
    row_diag = min(a1, d1) > max(b1, c1)
    row_anti = max(a1, d1) < min(b1, c1)
    col_diag = min(a2, d2) > max(b2, c2)
    col_anti = max(a2, d2) < min(b2, c2)
    return (row_diag and col_anti) or (row_anti and col_diag)


class ParamGame2x2():
    """
    A 2x2 game family mapping declarations to concrete games.

    Each player controls a subset of the cells of its own payoff matrix; the
    remaining cells stay at their true values. The base game holds the true
    values of every cell, so instantiating with the truth reproduces it.
    :param base: The true game.
    :type base: BimatrixGame
    :param free_cells: Free cell names per player, e.g. {'row': ['A'], 'col': ['A']}.
    :type free_cells: Dict[str, Sequence[str]]
    :param bounds: Optional (lo, hi) per free cell per player; unbounded when omitted.
    :type bounds: Dict[str, Sequence[Tuple[float, float]]]
    :param preserve_best_replies: Reject declarations that change the signs of the
        declaring player's best replies to pure strategies.
    :type preserve_best_replies: bool
    """
    def __init__(
        self,
        base: BimatrixGame,
        free_cells: Dict[str, Sequence[str]],
        bounds: Optional[Dict[str, Sequence[Tuple[float, float]]]] = None,
        preserve_best_replies: bool = False,
        name: str = '',
    ):
        base.require_2x2()
        self.base = base
        self.name = name or base.name
        self.preserve_best_replies = preserve_best_replies
        cells: List[Tuple[str, ...]] = []
        for key in PLAYER_KEYS:
            names = tuple(free_cells.get(key, ()))
            for cell_name in names:
                if cell_name not in CELL_INDEX:
                    raise DeclarationError(f'Unknown cell {cell_name!r} for player {key}.')
            if len(set(names)) != len(names):
                raise DeclarationError(f'Duplicate free cells for player {key}: {names}')
            cells.append(names)
        self.free_cells: Tuple[Tuple[str, ...], Tuple[str, ...]] = (cells[0], cells[1])

        bounds = bounds or {}
        self.bounds: List[Tuple[Tuple[float, float], ...]] = []
        for idx, key in enumerate(PLAYER_KEYS):
            player_bounds = tuple(
                (float(lo), float(hi)) for lo, hi in bounds.get(key, [(-math.inf, math.inf)] * len(cells[idx]))
            )
            if len(player_bounds) != len(cells[idx]):
                raise DeclarationError(
                    f'{key} has {len(cells[idx])} free cells but {len(player_bounds)} bounds.'
                )
            for lo, hi in player_bounds:
                if not lo <= hi:
                    raise DeclarationError(f'Empty bound interval [{lo}, {hi}] for player {key}.')
            self.bounds.append(player_bounds)

        truth = self.truth()
        for idx in (ROW, COL):
            if not self.in_bounds(idx, truth[idx]):
                raise DeclarationError(f'True declaration of player {idx} lies outside its bounds.')

    def truth(self) -> Declaration:
        """The truthful declaration profile (s_1, s_2)."""
        return Declaration(tuple(
            tuple(self.base.cell(idx, name) for name in self.free_cells[idx])
            for idx in (ROW, COL)
        ))

    def in_bounds(self, player: Union[int, str], values: Sequence[float]) -> bool:
        idx = player_index(player)
        if len(values) != len(self.free_cells[idx]):
            return False
        return all(lo <= v <= hi for v, (lo, hi) in zip(values, self.bounds[idx]))

    def contains(self, decl: Declaration) -> bool:
        """True when both players' vectors lie inside their parameter spaces."""
        for idx in (ROW, COL):
            if not self.in_bounds(idx, decl[idx]):
                return False
        if self.preserve_best_replies:
            declared = self._apply(decl)
            for idx in (ROW, COL):
                if best_reply_signs(declared, idx) != best_reply_signs(self.base, idx):
                    return False
        return True

    def declare(self, row: Union[float, Sequence[float]], col: Union[float, Sequence[float]]) -> Declaration:
        """Build a declaration profile and validate it against this space."""
        decl = Declaration.of(row, col)
        self.validate(decl)
        return decl

    def validate(self, decl: Declaration) -> None:
        if not self.contains(decl):
            raise DeclarationError(
                f'Declaration {decl.to_json()} lies outside the parameter space of '
                f'{self.name or "family"} (free cells {self.free_cells}, bounds {self.bounds}).'
            )

    def _apply(self, decl: Declaration) -> BimatrixGame:
        payoffs = [np.array(self.base.u1), np.array(self.base.u2)]
        for idx in (ROW, COL):
            if len(decl[idx]) != len(self.free_cells[idx]):
                raise DeclarationError(
                    f'Player {idx} declared {len(decl[idx])} values for '
                    f'{len(self.free_cells[idx])} free cells.'
                )
            for name, value in zip(self.free_cells[idx], decl[idx]):
                payoffs[idx][CELL_INDEX[name]] = value
        return BimatrixGame(payoffs[0], payoffs[1], name=self.name)

    def instantiate(self, decl: Declaration) -> BimatrixGame:
        self.validate(decl)
        return self._apply(decl)

    def grid(self, player: Union[int, str], points: int, bounds: Optional[Sequence[Tuple[float, float]]] = None) -> List[Tuple[float, ...]]:
        """
        Uniform grid over a player's (finite) declaration box; the truth is
        always included.
        """
        idx = player_index(player)
        box = tuple(bounds) if bounds is not None else self.bounds[idx]
        axes = []
        for lo, hi in box:
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise DeclarationError(
                    f'Cannot grid an unbounded interval [{lo}, {hi}] for player {idx}; '
                    'configure finite grid bounds.'
                )
            axes.append(np.linspace(lo, hi, points))
        values = [tuple(float(v) for v in combo) for combo in itertools.product(*axes)]
        truth = self.truth()[idx]
        if truth not in values:
            values.append(truth)
        return values

    def to_json(self) -> Dict[str, Any]:
        data = self.base.to_json()
        data['free_cells'] = {key: list(self.free_cells[idx]) for idx, key in enumerate(PLAYER_KEYS)}
        data['truth'] = self.truth().to_json()
        data['bounds'] = {
            key: [[lo, hi] for lo, hi in self.bounds[idx]] for idx, key in enumerate(PLAYER_KEYS)
        }
        data['preserve_best_replies'] = self.preserve_best_replies
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'ParamGame2x2':
        base = BimatrixGame.from_json(data)
        free_cells = data.get('free_cells', {})
        truth = data.get('truth')
        if truth is not None:
            # The truth is authoritative for the free cells of the base game.
            payoffs = [np.array(base.u1), np.array(base.u2)]
            for idx, key in enumerate(PLAYER_KEYS):
                names = free_cells.get(key, [])
                values = truth.get(key, [])
                if len(values) != len(names):
                    raise DeclarationError(
                        f'Truth for {key} has {len(values)} values for {len(names)} free cells.'
                    )
                for name, value in zip(names, values):
                    payoffs[idx][CELL_INDEX[name]] = value
            base = BimatrixGame(payoffs[0], payoffs[1], name=data.get('name', ''))
        bounds = data.get('bounds')
        if bounds is not None:
            bounds = {key: [tuple(b) for b in bounds.get(key, [])] for key in PLAYER_KEYS}
            for idx, key in enumerate(PLAYER_KEYS):
                if not bounds[key]:
                    bounds[key] = [(-math.inf, math.inf)] * len(free_cells.get(key, []))
        return cls(
            base,
            free_cells,
            bounds=bounds,
            preserve_best_replies=bool(data.get('preserve_best_replies', False)),
            name=data.get('name', ''),
        )


@dataclass(frozen=True)
class CournotScenario:
    """
    Linear Cournot duopoly: price a - b(q1 + q2), per-unit costs c1, c2.
    """
    a: float
    b: float
    c1: float
    c2: float

    def __post_init__(self):
        for name in ('a', 'b', 'c1', 'c2'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f'Cournot parameter {name} must be finite, got {value!r}.')
        if self.a <= 0:
            raise ValueError(f'Demand intercept a must be positive, got {self.a}.')
        if self.b <= 0:
            raise ValueError(f'Demand slope b must be positive, got {self.b}.')
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError(f'Costs must be non-negative, got ({self.c1}, {self.c2}).')

    @property
    def costs(self) -> Tuple[float, float]:
        return (self.c1, self.c2)

    @property
    def q_max(self) -> float:
        return self.a / self.b

    def truth(self) -> Declaration:
        return Declaration.of(self.c1, self.c2)

    def in_bounds(self, player: Union[int, str], values: Sequence[float]) -> bool:
        return len(values) == 1 and 0.0 <= values[0] <= self.a

    def contains(self, decl: Declaration) -> bool:
        return all(self.in_bounds(idx, decl[idx]) for idx in (ROW, COL))

    def declare(self, x1: float, x2: float) -> Declaration:
        decl = Declaration.of(x1, x2)
        if not self.contains(decl):
            raise DeclarationError(f'Declared costs ({x1}, {x2}) must lie in [0, {self.a}].')
        return decl

    def grid(self, player: Union[int, str], points: int, bounds: Optional[Sequence[Tuple[float, float]]] = None) -> List[Tuple[float, ...]]:
        lo, hi = bounds[0] if bounds else (0.0, self.a)
        values = [(float(v),) for v in np.linspace(lo, hi, points)]
        truth = (self.costs[player_index(player)],)
        if truth not in values:
            values.append(truth)
        return values

    def to_json(self) -> Dict[str, Any]:
        return {'cournot': {'a': self.a, 'b': self.b, 'c': [self.c1, self.c2]}}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'CournotScenario':
        body = data.get('cournot', data)
        c1, c2 = body['c']
        return cls(float(body['a']), float(body['b']), float(c1), float(c2))


ProfileLike = Union[MixedProfile, Tuple[float, float]]


def _pq(profile: ProfileLike) -> Tuple[float, float]:
    if isinstance(profile, MixedProfile):
        if profile.row.size != 2 or profile.col.size != 2:
            raise DimensionMismatchError('Expected 2x2 mixed profile.')
        return profile.p, profile.q
    p, q = profile
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f'(p, q) = ({p}, {q}) must lie in [0, 1]^2.')
    return float(p), float(q)


def expected_utilities_2x2(game: BimatrixGame, profile: ProfileLike) -> Tuple[float, float]:
    """
    Exact bilinear expected payoffs of a 2x2 game at (p, q):
        u1 = pq(A1 - C1 + D1 - B1) + p(B1 - D1) + q(C1 - D1) + D1
    and the analogous expression for the column player.
    :param game: A 2x2 game.
    :type game: BimatrixGame
    :param profile: MixedProfile or (p, q) tuple.
    :return: (u1, u2)
    :rtype: Tuple[float, float]
    """
    game.require_2x2()
    p, q = _pq(profile)
    a1, b1, c1, d1 = (game.cell(ROW, k) for k in 'ABCD')
    a2, b2, c2, d2 = (game.cell(COL, k) for k in 'ABCD')
    u1 = p * q * (a1 - c1 + d1 - b1) + p * (b1 - d1) + q * (c1 - d1) + d1
    u2 = p * q * (a2 - b2 + d2 - c2) + p * (b2 - d2) + q * (c2 - d2) + d2
    return u1, u2


def joint_expected_utilities(game: BimatrixGame, dist: JointDistribution) -> Tuple[float, float]:
    """
    Expected payoff of each player under a joint distribution over profiles.
    """
    if dist.shape != game.shape:
        raise DimensionMismatchError(f'Distribution shape {dist.shape} does not match game {game.shape}.')
    return float((dist.probs * game.u1).sum()), float((dist.probs * game.u2).sum())


def instantiate(family: ParamGame2x2, decl: Declaration) -> BimatrixGame:
    """Replace the family's free cells with the declared values."""
    return family.instantiate(decl)


class NaturalSpaceReport(NamedTuple):
    passed: bool
    reason: str


def _indifference_coefficients(player: int, level: float) -> Dict[str, float]:
    # Row player: q*A + (1-q)*B - q*C - (1-q)*D = 0 makes the column mix at q.
    # Column player: p*A + (1-p)*C - p*B - (1-p)*D = 0 makes the row mix at p.
    if player == ROW:
        return {'A': level, 'B': 1.0 - level, 'C': -level, 'D': -(1.0 - level)}
    return {'A': level, 'B': -level, 'C': 1.0 - level, 'D': -(1.0 - level)}


def solve_indifference_cell(
        game: BimatrixGame,
        player: Union[int, str],
        cell_name: str,
        level: float) -> float:
    """
    Value of one of the player's own cells (others unchanged) that makes the
    opponent mix with probability `level` on its first action in the game's
    mixed equilibrium. The row player's cells move q, the column player's move p.
    """
    idx = player_index(player)
    coefs = _indifference_coefficients(idx, level)
    payoffs = game.payoffs(idx)
    rest = sum(coefs[k] * payoffs[CELL_INDEX[k]] for k in 'ABCD' if k != cell_name)
    coef = coefs[cell_name]
    if abs(coef) < DEGENERATE_TOL:
        raise DegenerateGameError(f'Cell {cell_name} cannot move the opponent mix at level {level}.')
    return -rest / coef


def _analyzable(declared: BimatrixGame, base: BimatrixGame, idx: int) -> Optional[bool]:
    signs = best_reply_signs(declared, idx)
    if 0 in signs:
        return None  # ties excluded from the space
    if signs == best_reply_signs(base, idx):
        return True
    return signs[0] == signs[1]


def validate_natural_space(family: ParamGame2x2, test_points: int = 99) -> NaturalSpaceReport:
    """
    Check the two defining properties of a natural parameter space of an
    opposing-interests family:
      (1) sufficient generality: every opponent mix level in (0, 1) is induced by
          some declaration (solved in closed form per free cell, others at truth);
      (2) analyzability: every declaration either keeps the signs of the player's
          best replies to pure strategies or gives the player a dominant strategy.
    :raises NotOpposingInterestsError: when the base game is not opposing-interests.
    """
    base = family.base
    if not is_opposing_interests(base):
        raise NotOpposingInterestsError(f'Base game {base!r} is not an opposing-interests game.')

    levels = np.linspace(0.0, 1.0, test_points + 2)[1:-1]
    truth = family.truth()
    for idx, key in enumerate(PLAYER_KEYS):
        cells = family.free_cells[idx]
        if not cells:
            return NaturalSpaceReport(False, f'generality: {key} player has no free cells')
        for level in levels:
            realized = False
            for pos, cell_name in enumerate(cells):
                try:
                    value = solve_indifference_cell(base, idx, cell_name, float(level))
                except DegenerateGameError:
                    continue
                values = list(truth[idx])
                values[pos] = value
                candidate = truth.with_player(idx, values)
                if family.contains(candidate):
                    realized = True
                    break
            if not realized:
                logger.warning('No %s declaration of %s induces opponent mix %.4f', key, family.name, level)
                return NaturalSpaceReport(
                    False,
                    f'generality: no {key} declaration induces opponent mix {level:.4f}',
                )

    # Analyzability over critical declarations: each free cell at values just
    # around every other cell of the player's matrix, at its bounds and at truth.
    for idx, key in enumerate(PLAYER_KEYS):
        cells = family.free_cells[idx]
        payoffs = base.payoffs(idx)
        spread = float(np.ptp(payoffs)) or 1.0
        candidates_per_cell = []
        for pos, cell_name in enumerate(cells):
            lo, hi = family.bounds[idx][pos]
            values = {truth[idx][pos]}
            for other in 'ABCD':
                ref = float(payoffs[CELL_INDEX[other]])
                values.update({ref - 0.5 * spread, ref + 0.5 * spread})
            values.update({v for v in (lo, hi) if math.isfinite(v)})
            values.update({truth[idx][pos] - 10 * spread, truth[idx][pos] + 10 * spread})
            candidates_per_cell.append(sorted(v for v in values if lo <= v <= hi))
        for combo in itertools.product(*candidates_per_cell):
            decl = truth.with_player(idx, combo)
            if not family.contains(decl):
                continue
            verdict = _analyzable(family._apply(decl), base, idx)
            if verdict is False:
                return NaturalSpaceReport(
                    False,
                    f'analyzability: {key} declaration {list(combo)} flips a best reply '
                    'without creating a dominant strategy',
                )
    logger.debug('Family %s is natural', family.name)
    return NaturalSpaceReport(True, 'natural')


# Canonical games.

def g_oi(c: float = 2.0, d: float = 3.0) -> BimatrixGame:
    """Matching-pennies variant with opposing interests; truth c=2, d=3."""
    return BimatrixGame(
        [[c, -1.0], [-1.0, 1.0]],
        [[-1.0, 1.0], [d, -1.0]],
        name='G_OI',
    )


def g_oi_family(bounds: Optional[Dict[str, Sequence[Tuple[float, float]]]] = None) -> ParamGame2x2:
    """Row declares c (cell A1), column declares d (cell C2)."""
    return ParamGame2x2(g_oi(), {'row': ['A'], 'col': ['C']}, bounds=bounds, name='G_OI')


def g_ds(c: float = 1.0, d: float = 3.0) -> BimatrixGame:
    """
    Dominance-solvable example: bottom row dominant for the truth c=1.
    Column bottom-row payoffs are the completion (3, 2).
    """
    return BimatrixGame(
        [[c, 3.0], [2.0, 4.0]],
        [[d, 4.0], [3.0, 2.0]],
        name='G_DS',
    )


def g_ds_family(
        wide: bool = False,
        bounds: Optional[Dict[str, Sequence[Tuple[float, float]]]] = None) -> ParamGame2x2:
    """
    Row declares c (cell A1) and column declares d (cell A2). The wide variant
    also frees the row player's B1 cell.
    """
    free = {'row': ['A', 'B'] if wide else ['A'], 'col': ['A']}
    return ParamGame2x2(g_ds(), free, bounds=bounds, name='G_DS_wide' if wide else 'G_DS')


def matching_pennies() -> BimatrixGame:
    return BimatrixGame([[1.0, -1.0], [-1.0, 1.0]], [[-1.0, 1.0], [1.0, -1.0]], name='matching_pennies')


def matching_pennies_family(bounds: Optional[Dict[str, Sequence[Tuple[float, float]]]] = None) -> ParamGame2x2:
    return ParamGame2x2(matching_pennies(), {'row': ['A'], 'col': ['B']}, bounds=bounds, name='matching_pennies')


def battle_of_sexes() -> BimatrixGame:
    return BimatrixGame([[2.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 2.0]], name='battle_of_sexes')


def prisoners_dilemma() -> BimatrixGame:
    """Action 0 = cooperate, 1 = defect."""
    return BimatrixGame([[3.0, 0.0], [4.0, 1.0]], [[3.0, 4.0], [0.0, 1.0]], name='prisoners_dilemma')


def coordination_game() -> BimatrixGame:
    return BimatrixGame([[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]], name='coordination')


CANONICAL_GAMES = {
    'g_oi': g_oi,
    'g_ds': g_ds,
    'matching_pennies': matching_pennies,
    'battle_of_sexes': battle_of_sexes,
    'prisoners_dilemma': prisoners_dilemma,
    'coordination': coordination_game,
}

CANONICAL_FAMILIES = {
    'g_oi': g_oi_family,
    'g_ds': g_ds_family,
    'g_ds_wide': lambda bounds=None: g_ds_family(wide=True, bounds=bounds),
    'matching_pennies': matching_pennies_family,
}


def load_game(data: Union[str, Dict[str, Any]]) -> BimatrixGame:
    """A game from JSON or from a canonical name ("g_oi", ...)."""
    if isinstance(data, str):
        if data not in CANONICAL_GAMES:
            raise ValueError(f'Unknown canonical game {data!r}; known: {sorted(CANONICAL_GAMES)}')
        return CANONICAL_GAMES[data]()
    return BimatrixGame.from_json(data)


def load_family(data: Union[str, Dict[str, Any]]) -> ParamGame2x2:
    """A family from JSON or from a canonical name, optionally with bounds."""
    if isinstance(data, str):
        if data not in CANONICAL_FAMILIES:
            raise ValueError(f'Unknown canonical family {data!r}; known: {sorted(CANONICAL_FAMILIES)}')
        return CANONICAL_FAMILIES[data]()
    if 'canonical' in data:
        bounds = data.get('bounds')
        if bounds is not None:
            bounds = {key: [tuple(b) for b in bounds.get(key, [])] for key in PLAYER_KEYS}
        return CANONICAL_FAMILIES[data['canonical']](bounds=bounds)
    return ParamGame2x2.from_json(data)
