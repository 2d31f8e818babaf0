"""Meta-solvers: map a meta-game payoff tensor to a distribution over the
current populations (uniform, exact Nash for two-player zero-sum, support
enumeration for small bimatrix games, ranking-based, and projected replicator
dynamics).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import (
    InvalidInputError,
    NumericalFailureError,
    UnsupportedConfigurationError,
)
from .games import NormalFormGame
from .response_graph import MULTI_POP, SINGLE_POP, alpharank, build_response_graph

NASH_LP_TOL = 1e-9
SUPPORT_ENUM_TOL = 1e-9


@dataclass(frozen=True)
class MetaSolverConfig:
    kind: str = "alpharank"  # uniform | nash_lp | nash_support_enum | alpharank | prd
    alpha_policy: object = "sweep"
    m: int = 50
    prd_dt: float = 1e-3
    prd_iterations: int = 50_000
    prd_gamma: float = 1e-10
    max_support: int = 6

    def __post_init__(self):
        if self.prd_dt <= 0 or self.prd_gamma < 0 or self.prd_iterations < 1:
            raise InvalidInputError("invalid PRD parameters")


@dataclass(frozen=True)
class MetaDistribution:
    """Solver output over the population meta-game.

    per_player holds one probability vector per player (a single vector in
    single-population mode).  joint, when present, is the full distribution
    over meta profiles (C-order raveled); meta_ssccs are the sink components
    of the meta response graph as tuples of raveled profile indices.
    """

    mode: str
    per_player: tuple[np.ndarray, ...]
    joint: np.ndarray | None = None
    meta_ssccs: tuple[tuple[int, ...], ...] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def pop_sizes(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.per_player)

    def joint_tensor(self) -> np.ndarray:
        """Distribution over meta profiles; product form when joint is absent."""
        if self.joint is not None:
            return self.joint.reshape(self.pop_sizes)
        out = self.per_player[0]
        for v in self.per_player[1:]:
            out = np.multiply.outer(out, v)
        return out

    def opponent_marginal(self, player: int) -> np.ndarray:
        """Marginal over the other players' meta profiles."""
        if self.joint is not None:
            return self.joint_tensor().sum(axis=player)
        others = [v for k, v in enumerate(self.per_player) if k != player]
        if not others:
            return np.array(1.0)
        out = others[0]
        for v in others[1:]:
            out = np.multiply.outer(out, v)
        return out


def _validated(vec: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    vec = np.clip(np.asarray(vec, dtype=float), 0.0, None)
    s = vec.sum()
    if not np.isfinite(s) or abs(s - 1.0) > 1e-6:
        raise NumericalFailureError(f"solver produced a bad distribution (sum {s})")
    return vec / s


def solve_uniform(pop_sizes: Sequence[int], mode: str = MULTI_POP) -> MetaDistribution:
    if any(n < 1 for n in pop_sizes):
        raise InvalidInputError("populations must be nonempty")
    return MetaDistribution(
        mode=mode,
        per_player=tuple(np.full(n, 1.0 / n) for n in pop_sizes),
    )


# ---------------------------------------------------------------------------
# Exact Nash for two-player zero-sum games (minimax LP).
# ---------------------------------------------------------------------------


def _minimax_lp(payoff: np.ndarray) -> tuple[np.ndarray, float]:
    """Maximin mixture for the row player of a zero-sum matrix game."""
    n_rows, n_cols = payoff.shape
    # Variables: x (row mixture), v.  Maximize v s.t. x^T A >= v per column.
    c = np.zeros(n_rows + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-payoff.T, np.ones((n_cols, 1))])
    b_ub = np.zeros(n_cols)
    a_eq = np.zeros((1, n_rows + 1))
    a_eq[0, :n_rows] = 1.0
    res = linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=[(0, None)] * n_rows + [(None, None)],
        method="highs",
    )
    if not res.success:
        raise NumericalFailureError(f"minimax LP failed: {res.message}")
    x = np.clip(res.x[:n_rows], 0.0, None)
    return x / x.sum(), float(res.x[-1])


def solve_nash_lp(meta_game: NormalFormGame,
                  mode: str = MULTI_POP) -> MetaDistribution:
    """Exact Nash equilibrium of a two-player zero-sum meta-game."""
    if meta_game.num_players != 2:
        raise UnsupportedConfigurationError("nash_lp handles two-player games only")
    m1, m2 = meta_game.payoffs
    if np.max(np.abs(m1 + m2)) > NASH_LP_TOL:
        raise UnsupportedConfigurationError("nash_lp requires a zero-sum game")
    x, value = _minimax_lp(m1)
    y, _ = _minimax_lp(m2.T)
    dist = MetaDistribution(
        mode=mode,
        per_player=(_validated(x), _validated(y)),
        diagnostics={"game_value": value},
    )
    if mode == SINGLE_POP:
        dist = replace(dist, per_player=(dist.per_player[0],))
    return dist


# ---------------------------------------------------------------------------
# Support enumeration for small general bimatrix games.
# ---------------------------------------------------------------------------


def _support_candidate(m1, m2, rows, cols):
    """Try to realize an NE with the given supports; None if infeasible."""
    a = m1[np.ix_(rows, cols)]
    b = m2[np.ix_(rows, cols)]
    nr, nc = len(rows), len(cols)

    # Column mixture y makes supported rows indifferent at value v1.
    sys_a = np.zeros((nr + 1, nc + 1))
    sys_a[:nr, :nc] = a
    sys_a[:nr, nc] = -1.0
    sys_a[nr, :nc] = 1.0
    rhs = np.zeros(nr + 1)
    rhs[nr] = 1.0
    sol, *_ = np.linalg.lstsq(sys_a, rhs, rcond=None)
    y_s, v1 = sol[:nc], sol[nc]

    sys_b = np.zeros((nc + 1, nr + 1))
    sys_b[:nc, :nr] = b.T
    sys_b[:nc, nr] = -1.0
    sys_b[nc, :nr] = 1.0
    rhs = np.zeros(nc + 1)
    rhs[nc] = 1.0
    sol, *_ = np.linalg.lstsq(sys_b, rhs, rcond=None)
    x_s, v2 = sol[:nr], sol[nc]

    tol = SUPPORT_ENUM_TOL
    if np.any(x_s < -tol) or np.any(y_s < -tol):
        return None
    x = np.zeros(m1.shape[0])
    y = np.zeros(m1.shape[1])
    x[list(rows)] = np.clip(x_s, 0.0, None)
    y[list(cols)] = np.clip(y_s, 0.0, None)
    if x.sum() <= 0 or y.sum() <= 0:
        return None
    x /= x.sum()
    y /= y.sum()
    # Full equilibrium conditions (covers degenerate support guesses too).
    row_vals = m1 @ y
    col_vals = m2.T @ x
    if np.max(row_vals) - x @ row_vals > tol:
        return None
    if np.max(col_vals) - y @ col_vals > tol:
        return None
    return x, y


def _support_order(n_rows, n_cols, max_support):
    supports = []
    for r_size in range(1, min(n_rows, max_support) + 1):
        for c_size in range(1, min(n_cols, max_support) + 1):
            for rows in itertools.combinations(range(n_rows), r_size):
                for cols in itertools.combinations(range(n_cols), c_size):
                    supports.append((rows, cols))
    # Lexicographic support order: total size, then row size, then supports.
    supports.sort(key=lambda rc: (len(rc[0]) + len(rc[1]), len(rc[0]), rc[0], rc[1]))
    return supports


def enumerate_nash(meta_game: NormalFormGame, max_support: int = 6):
    """All support-enumeration equilibria of a bimatrix game, deduplicated."""
    if meta_game.num_players != 2:
        raise UnsupportedConfigurationError("support enumeration handles K=2 only")
    m1, m2 = meta_game.payoffs
    seen = []
    for rows, cols in _support_order(m1.shape[0], m1.shape[1], max_support):
        found = _support_candidate(m1, m2, rows, cols)
        if found is None:
            continue
        x, y = found
        if any(np.allclose(x, px, atol=1e-7) and np.allclose(y, py, atol=1e-7)
               for px, py in seen):
            continue
        seen.append((x, y))
        yield x, y


def solve_nash_support_enum(meta_game: NormalFormGame, max_support: int = 6,
                            mode: str = MULTI_POP) -> MetaDistribution:
    """First equilibrium in lexicographic support order."""
    for x, y in enumerate_nash(meta_game, max_support):
        per_player = (x,) if mode == SINGLE_POP else (x, y)
        return MetaDistribution(mode=mode, per_player=per_player)
    raise NumericalFailureError("support enumeration found no equilibrium")


# ---------------------------------------------------------------------------
# Ranking meta-solver.
# ---------------------------------------------------------------------------


def solve_alpharank_meta(meta_game: NormalFormGame, config: MetaSolverConfig,
                         mode: str = MULTI_POP) -> MetaDistribution:
    graph = build_response_graph(meta_game, mode)
    result = alpharank(meta_game, mode, alpha_policy=config.alpha_policy,
                       m=config.m, graph=graph)
    ssccs = tuple(tuple(int(n) for n in comp) for comp in graph.sink_components())
    diagnostics = {
        "alpha_used": result.alpha_used,
        "residual": result.residual,
    }
    if mode == SINGLE_POP:
        return MetaDistribution(
            mode=mode,
            per_player=(result.distribution,),
            joint=None,
            meta_ssccs=ssccs,
            diagnostics=diagnostics,
        )
    joint = result.distribution
    shape = meta_game.strategy_counts
    tensor = joint.reshape(shape)
    marginals = []
    for k in range(meta_game.num_players):
        axes = tuple(i for i in range(meta_game.num_players) if i != k)
        marginals.append(_validated(tensor.sum(axis=axes)))
    return MetaDistribution(
        mode=mode,
        per_player=tuple(marginals),
        joint=joint,
        meta_ssccs=ssccs,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Projected replicator dynamics.
# ---------------------------------------------------------------------------


def project_to_bounded_simplex(x: np.ndarray, lower: float) -> np.ndarray:
    """Euclidean projection onto {v : v_i >= lower, sum v = 1}."""
    n = len(x)
    budget = 1.0 - n * lower
    if budget < 0:
        raise InvalidInputError("lower bound too large for simplex projection")
    z = np.asarray(x, dtype=float) - lower
    u = np.sort(z)[::-1]
    cumulative = np.cumsum(u) - budget
    ks = np.arange(1, n + 1)
    valid = u - cumulative / ks > 0
    k = int(ks[valid][-1])
    tau = cumulative[k - 1] / k
    return np.maximum(z - tau, 0.0) + lower


def _prd_gradient(payoffs, dists):
    """Replicator gradients for every player on the current meta-game."""
    grads = []
    for k, tensor in enumerate(payoffs):
        acc = tensor
        for axis in reversed(range(len(dists))):
            if axis == k:
                continue
            acc = np.tensordot(acc, dists[axis], axes=([axis], [0]))
        # acc is now player k's payoff per own strategy.
        mean = acc @ dists[k]
        grads.append(dists[k] * (acc - mean))
    return grads


def solve_prd(meta_game: NormalFormGame, config: MetaSolverConfig,
              mode: str = MULTI_POP) -> MetaDistribution:
    """Explicit-Euler replicator flow projected onto the gamma-floored
    simplex, returning the time average over the whole trajectory (initial
    uniform iterate included).
    """
    if mode == SINGLE_POP:
        payoffs = (meta_game.payoffs[0],)
        dists = [np.full(meta_game.strategy_counts[0],
                         1.0 / meta_game.strategy_counts[0])]

        def gradient(ds):
            u = payoffs[0] @ ds[0]
            return [ds[0] * (u - ds[0] @ u)]
    else:
        payoffs = meta_game.payoffs
        dists = [np.full(n, 1.0 / n) for n in meta_game.strategy_counts]

        def gradient(ds):
            return _prd_gradient(payoffs, ds)

    lowers = [config.prd_gamma / (len(d) + 1) for d in dists]
    averages = [d.copy() for d in dists]
    for _ in range(config.prd_iterations):
        grads = gradient(dists)
        for k in range(len(dists)):
            stepped = dists[k] + config.prd_dt * grads[k]
            if not np.all(np.isfinite(stepped)):
                raise NumericalFailureError("PRD dynamics produced non-finite values")
            dists[k] = project_to_bounded_simplex(stepped, lowers[k])
            averages[k] += dists[k]
    steps = config.prd_iterations + 1
    per_player = tuple(_validated(avg / steps) for avg in averages)
    return MetaDistribution(
        mode=mode,
        per_player=per_player,
        diagnostics={"iterations": config.prd_iterations},
    )


SOLVERS = {
    "uniform": lambda game, config, mode: solve_uniform(game.strategy_counts, mode)
    if mode == MULTI_POP
    else solve_uniform(game.strategy_counts[:1], mode),
    "nash_lp": lambda game, config, mode: solve_nash_lp(game, mode),
    "nash_support_enum": lambda game, config, mode: solve_nash_support_enum(
        game, config.max_support, mode),
    "alpharank": solve_alpharank_meta,
    "prd": solve_prd,
}


def solve(meta_game: NormalFormGame, config: MetaSolverConfig,
          mode: str = MULTI_POP) -> MetaDistribution:
    """Dispatch on config.kind; meta_game is the completed population game."""
    try:
        solver = SOLVERS[config.kind]
    except KeyError:
        raise InvalidInputError(f"unknown meta-solver kind: {config.kind!r}")
    if config.kind in ("alpharank", "prd"):
        return solver(meta_game, config, mode)
    return solver(meta_game, config, mode)
