"""Normal-form games: representation, predicates, generators, and fixture games.

A K-player normal-form game is stored as K dense payoff tensors; tensor k has
shape ``strategy_counts`` and entry ``payoffs[k][s]`` is the payoff to player k
at the pure profile s.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

PROB_ATOL = 1e-12
ZERO_SUM_ATOL = 1e-9


@dataclass(frozen=True)
class NormalFormGame:
    """Dense K-player normal-form game.

    payoffs[k] has shape strategy_counts and holds player k's payoffs.
    Instances are immutable; the tensors are set read-only on construction.
    """

    payoffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.payoffs:
            raise InvalidInputError("a game needs at least one payoff tensor")
        tensors = tuple(np.asarray(t, dtype=float) for t in self.payoffs)
        shape = tensors[0].shape
        if len(shape) != len(tensors):
            raise InvalidInputError(
                f"{len(tensors)} payoff tensors but profiles have {len(shape)} axes"
            )
        for k, t in enumerate(tensors):
            if t.shape != shape:
                raise InvalidInputError(
                    f"payoff tensor {k} has shape {t.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(t)):
                raise InvalidInputError(f"payoff tensor {k} has non-finite entries")
            t.setflags(write=False)
        object.__setattr__(self, "payoffs", tensors)

    @property
    def num_players(self) -> int:
        return len(self.payoffs)

    @property
    def strategy_counts(self) -> tuple[int, ...]:
        return self.payoffs[0].shape

    @property
    def num_profiles(self) -> int:
        return int(np.prod(self.strategy_counts))

    def payoff(self, player: int, profile: Sequence[int]) -> float:
        return float(self.payoffs[player][tuple(profile)])

    def profiles(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.strategy_counts))

    def restrict(self, per_player_strategies: Sequence[Sequence[int]]) -> "NormalFormGame":
        """Subgame on the given per-player strategy subsets (meta-game lookup)."""
        if len(per_player_strategies) != self.num_players:
            raise InvalidInputError("need one strategy subset per player")
        grid = np.ix_(*[np.asarray(s, dtype=int) for s in per_player_strategies])
        return NormalFormGame(tuple(t[grid] for t in self.payoffs))


@dataclass(frozen=True)
class MixedProfile:
    """Factorized mixed profile: one probability vector per player."""

    per_player: tuple[np.ndarray, ...]

    def __post_init__(self):
        vecs = []
        for k, v in enumerate(self.per_player):
            v = np.asarray(v, dtype=float)
            if v.ndim != 1:
                raise InvalidInputError(f"player {k} mixture must be a vector")
            if np.any(v < -PROB_ATOL) or abs(v.sum() - 1.0) > PROB_ATOL:
                raise InvalidInputError(
                    f"player {k} mixture is not a probability vector: {v}"
                )
            v.setflags(write=False)
            vecs.append(v)
        object.__setattr__(self, "per_player", tuple(vecs))

    @staticmethod
    def uniform(strategy_counts: Sequence[int]) -> "MixedProfile":
        return MixedProfile(tuple(np.full(n, 1.0 / n) for n in strategy_counts))

    @staticmethod
    def dirac(strategy_counts: Sequence[int], profile: Sequence[int]) -> "MixedProfile":
        vecs = []
        for n, s in zip(strategy_counts, profile):
            v = np.zeros(n)
            v[s] = 1.0
            vecs.append(v)
        return MixedProfile(tuple(vecs))


@dataclass(frozen=True)
class GameFlags:
    symmetric: bool
    zero_sum: bool
    win_loss: bool


def expected_payoffs(game: NormalFormGame, profile: MixedProfile) -> np.ndarray:
    """Expected payoff vector (M^1(pi), ..., M^K(pi)) under a factorized profile."""
    if len(profile.per_player) != game.num_players:
        raise InvalidInputError("profile has wrong number of players")
    for k, v in enumerate(profile.per_player):
        if v.shape[0] != game.strategy_counts[k]:
            raise InvalidInputError(
                f"player {k} mixture has length {v.shape[0]}, "
                f"expected {game.strategy_counts[k]}"
            )
    out = np.empty(game.num_players)
    for k, tensor in enumerate(game.payoffs):
        acc = tensor
        # Contract opponents' axes last-to-first so axis indices stay valid.
        for axis in reversed(range(game.num_players)):
            acc = np.tensordot(acc, profile.per_player[axis], axes=([axis], [0]))
        out[k] = acc
    return out


def is_zero_sum(game: NormalFormGame, atol: float = ZERO_SUM_ATOL) -> bool:
    total = sum(game.payoffs)
    return bool(np.max(np.abs(total)) <= atol)


def is_symmetric(game: NormalFormGame, atol: float = ZERO_SUM_ATOL) -> bool:
    """Payoffs invariant under simultaneous permutation of players and seats.

    Checked on adjacent transpositions, which generate the full symmetric
    group: for the swap of players k and k+1 the condition is
    M^k(s) = M^{k+1}(swap_axes(s)) for all s, plus invariance of every other
    player's tensor under the same axis swap.
    """
    counts = game.strategy_counts
    if len(set(counts)) != 1:
        return False
    K = game.num_players
    for k in range(K - 1):
        swapped = [np.swapaxes(t, k, k + 1) for t in game.payoffs]
        expect = list(swapped)
        expect[k], expect[k + 1] = swapped[k + 1], swapped[k]
        for t, e in zip(game.payoffs, expect):
            if not np.allclose(t, e, rtol=0.0, atol=atol):
                return False
    return True


def is_win_loss(game: NormalFormGame) -> bool:
    """Two-player constant-sum game with payoffs in {0, 1} summing to 1.

    Defined for two players only; any other player count returns False.
    """
    if game.num_players != 2:
        return False
    for t in game.payoffs:
        if not np.all((t == 0.0) | (t == 1.0)):
            return False
    return bool(np.all(game.payoffs[0] + game.payoffs[1] == 1.0))


def game_flags(game: NormalFormGame) -> GameFlags:
    return GameFlags(
        symmetric=is_symmetric(game),
        zero_sum=is_zero_sum(game),
        win_loss=is_win_loss(game),
    )


# ---------------------------------------------------------------------------
# Random game generators.
#
# Draw order is fixed so a seed pins the game bit-for-bit: all Gaussian means
# are drawn first (player-major, action-lexicographic), then the Gaussian
# values in the same order.  `var` is the variance of the Gaussian.
# ---------------------------------------------------------------------------


def _validate_probs(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > PROB_ATOL:
        raise InvalidInputError(f"invalid probability vector: {probs}")
    return p


def generate_transitive(
    strategy_count: int,
    num_players: int,
    mean_values: Sequence[float] = (0.0, 1.0),
    mean_probs: Sequence[float] = (0.5, 0.5),
    var: float = 0.1,
    rng_seed=0,
) -> NormalFormGame:
    """Transitive component: per-player skill vectors f_k over own actions.

    Player k's payoff at joint action a is
    f_k[a^k] - mean_{i != k} f_i[a^i], which makes the game exactly zero-sum.
    """
    if num_players < 2:
        raise InvalidInputError("transitive generator needs at least two players")
    if len(mean_values) != len(mean_probs):
        raise InvalidInputError("mean_values and mean_probs must have equal length")
    if var <= 0:
        raise InvalidInputError("var must be positive")
    probs = _validate_probs(mean_probs)
    rng = np.random.default_rng(rng_seed)
    mus = rng.choice(np.asarray(mean_values, dtype=float),
                     size=(num_players, strategy_count), p=probs)
    f = rng.normal(loc=mus, scale=np.sqrt(var))

    shape = (strategy_count,) * num_players
    tensors = []
    for k in range(num_players):
        t = np.zeros(shape)
        for i in range(num_players):
            axes = [1] * num_players
            axes[i] = strategy_count
            contrib = f[i].reshape(axes)
            t = t + (contrib if i == k else -contrib / (num_players - 1))
        tensors.append(t)
    return NormalFormGame(tuple(tensors))


def generate_cyclic(
    strategy_count: int,
    num_players: int,
    var: float = 0.4,
    rng_seed=0,
) -> NormalFormGame:
    """Cyclic component: Gaussian noise centered per own-action slice.

    After centering, the slice sum over all opponents' actions is zero for
    every player and own action.
    """
    if var <= 0:
        raise InvalidInputError("var must be positive")
    rng = np.random.default_rng(rng_seed)
    shape = (strategy_count,) * num_players
    tensors = []
    for k in range(num_players):
        c = rng.normal(0.0, np.sqrt(var), size=shape)
        opp_axes = tuple(i for i in range(num_players) if i != k)
        if opp_axes:
            c = c - c.mean(axis=opp_axes, keepdims=True)
        else:
            c = c - c
        tensors.append(c)
    return NormalFormGame(tuple(tensors))


def generate_random_game(strategy_count: int, num_players: int, rng_seed=0) -> NormalFormGame:
    """Sum of a transitive and a cyclic component.

    The two components use child seeds spawned from ``rng_seed`` so the
    decomposition is reproducible: spawn index 0 is the transitive seed,
    index 1 the cyclic seed.
    """
    seed_t, seed_c = np.random.SeedSequence(rng_seed).spawn(2)
    t = generate_transitive(strategy_count, num_players, rng_seed=seed_t)
    c = generate_cyclic(strategy_count, num_players, rng_seed=seed_c)
    return NormalFormGame(tuple(a + b for a, b in zip(t.payoffs, c.payoffs)))


# ---------------------------------------------------------------------------
# Fixture games.
# ---------------------------------------------------------------------------


def _two_player(m1: np.ndarray, m2: np.ndarray) -> NormalFormGame:
    return NormalFormGame((np.asarray(m1, float), np.asarray(m2, float)))


def _symmetric_from_row(m1) -> NormalFormGame:
    m1 = np.asarray(m1, dtype=float)
    return _two_player(m1, m1.T)


def table2_game(eps: float = 0.1, phi: float = 10.0) -> NormalFormGame:
    """Symmetric zero-sum 5-strategy game over (A, B, C, D, X).

    Requires 0 < eps < 1 and phi > 2 so the intended dominance pattern holds.
    """
    if not (0 < eps < 1 and phi > 2):
        raise InvalidInputError("table2 requires 0 < eps < 1 and phi > 2")
    m1 = np.array([
        [0.0, -phi, 1.0, phi, -eps],
        [phi, 0.0, -phi**2, 1.0, -eps],
        [-1.0, phi**2, 0.0, -phi, -eps],
        [-phi, -1.0, phi, 0.0, -eps],
        [eps, eps, eps, eps, 0.0],
    ])
    return _symmetric_from_row(m1)


TABLE2_STRATEGY_NAMES = ("A", "B", "C", "D", "X")

# Snowflake fixture: a 3-player, 3-strategy game whose unique sink component
# is the singleton profile (2,1,2) (0-based) and whose improvement structure
# traps preference-based expansion started from ([1],[0],[0]) in the 7-node
# cycle over {0,1}^3 \ {(1,0,1)}.  Payoff values are implementation-chosen;
# the trace they must reproduce is checked in the test suite.
_SNOWFLAKE_LISTED = {
    # 1-based profile: (payoff to p1, p2, p3)
    (1, 1, 1): (0.0, 2.0, 0.0),
    (1, 1, 2): (0.0, 0.0, 2.0),
    (1, 2, 1): (0.0, 0.0, 2.0),
    (1, 2, 2): (4.0, 2.0, 0.0),
    (2, 1, 1): (2.0, 0.0, 0.0),
    (2, 1, 2): (-1.0, -1.0, -1.0),
    (2, 2, 1): (2.0, 2.0, 0.0),
    (2, 2, 2): (0.0, 2.0, 2.0),
    (3, 2, 1): (1.0, 0.0, 0.0),
    (3, 2, 3): (5.0, 5.0, 5.0),
}


def snowflake3p_game() -> NormalFormGame:
    listed = {tuple(i - 1 for i in p): v for p, v in _SNOWFLAKE_LISTED.items()}
    # Unlisted profiles sit in a graded pit: payoff -2-d for every player,
    # where d is the lattice distance (single-coordinate steps) to the listed
    # set.  Each unlisted profile then strictly improves toward the listed
    # region for some player, and no listed profile deviates into the pit.
    dist = {p: 0 for p in listed}
    frontier = list(listed)
    while frontier:
        nxt = []
        for p in frontier:
            for k in range(3):
                for s in range(3):
                    if s == p[k]:
                        continue
                    q = list(p)
                    q[k] = s
                    q = tuple(q)
                    if q not in dist:
                        dist[q] = dist[p] + 1
                        nxt.append(q)
        frontier = nxt
    tensors = [np.zeros((3, 3, 3)) for _ in range(3)]
    for p in itertools.product(range(3), repeat=3):
        vals = listed.get(p, (-2.0 - dist[p],) * 3)
        for k in range(3):
            tensors[k][p] = vals[k]
    return NormalFormGame(tuple(tensors))


def fixture_game(name: str, **params) -> NormalFormGame:
    """Small games used throughout the test and walkthrough fixtures.

    Known names: table2(eps, phi), exampleA4(eps), exampleA5(eps), chicken,
    prisoners_dilemma, snowflake3p, matching_pennies, rock_paper_scissors.
    """
    if name == "table2":
        return table2_game(**params)
    if name == "exampleA4":
        eps = params.pop("eps", 0.1)
        if params:
            raise InvalidInputError(f"unknown parameters {params} for {name}")
        # Symmetric: A/B cycle with a weakly coupled third strategy X.
        return _symmetric_from_row([
            [0.0, 1.0, eps],
            [1.0, 0.0, -eps],
            [-eps, eps, 0.0],
        ])
    if name == "exampleA5":
        eps = params.pop("eps", 0.1)
        if params:
            raise InvalidInputError(f"unknown parameters {params} for {name}")
        # Zero-sum, 3 row strategies vs 2 column strategies.
        m1 = np.array([
            [-1.0, 1.0],
            [1.0, -1.0],
            [-eps, -eps / 2.0],
        ])
        return _two_player(m1, -m1)
    if name == "chicken":
        # Strategy order (D, C); entries are (p1, p2) payoffs.
        m1 = np.array([[0.0, 7.0], [2.0, 6.0]])
        m2 = np.array([[0.0, 2.0], [7.0, 6.0]])
        return _two_player(m1, m2)
    if name == "prisoners_dilemma":
        # Strategy order (D, C).
        m1 = np.array([[0.0, 3.0], [-1.0, 2.0]])
        m2 = np.array([[0.0, -1.0], [3.0, 2.0]])
        return _two_player(m1, m2)
    if name == "snowflake3p":
        return snowflake3p_game()
    if name == "matching_pennies":
        m1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
        return _two_player(m1, -m1)
    if name == "rock_paper_scissors":
        m1 = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
        return _two_player(m1, -m1)
    raise InvalidInputError(f"unknown fixture game: {name!r}")


# ---------------------------------------------------------------------------
# Game file format: {"players": K, "strategy_counts": [...],
#                    "payoffs": [flat row-major list per player]}
# ---------------------------------------------------------------------------


def game_to_dict(game: NormalFormGame) -> dict:
    return {
        "players": game.num_players,
        "strategy_counts": list(game.strategy_counts),
        "payoffs": [t.ravel(order="C").tolist() for t in game.payoffs],
    }


def game_from_dict(data: dict) -> NormalFormGame:
    try:
        counts = tuple(int(n) for n in data["strategy_counts"])
        players = int(data["players"])
        flat = data["payoffs"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed game data: {exc}") from exc
    if players != len(counts) or len(flat) != players:
        raise InvalidInputError("inconsistent player count in game data")
    tensors = []
    for entries in flat:
        arr = np.asarray(entries, dtype=float)
        if arr.size != int(np.prod(counts)):
            raise InvalidInputError("payoff list length does not match strategy counts")
        tensors.append(arr.reshape(counts, order="C"))
    return NormalFormGame(tuple(tensors))


def save_game(game: NormalFormGame, path) -> None:
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh)


def load_game(path) -> NormalFormGame:
    with open(path) as fh:
        return game_from_dict(json.load(fh))
