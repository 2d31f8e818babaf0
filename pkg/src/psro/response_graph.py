"""Response graphs, sink-component analysis, and ranking via the perturbed
single-deviation Markov chain.

Multi-population mode: nodes are pure strategy profiles; an edge s -> sigma
exists when sigma differs from s in exactly one player k's strategy and
M^k(sigma) > M^k(s).  Single-population mode (symmetric two-player games
only): nodes are strategies; an edge s -> sigma exists when
M^1(sigma, s) > M^1(s, sigma).

The ranking chain places, for every single-deviation pair (s, sigma),

    C[s, sigma] = eta * (1 - exp(-alpha*d)) / (1 - exp(-alpha*m*d)),  d != 0
    C[s, sigma] = eta / m,                                            d == 0

with d the deviating player's payoff gain, eta = 1 / sum_l (|S^l| - 1), and
C[s, s] absorbing the remainder.  Rankings are read from its stationary
distribution at large alpha, located by a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import InvalidInputError, NumericalFailureError
from .games import NormalFormGame, is_symmetric

SINGLE_POP = "single_population"
MULTI_POP = "multi_population"

DEFAULT_ALPHA_GRID = tuple(np.geomspace(1e-2, 1e4, 20))
SWEEP_L1_TOL = 1e-4
OFF_SINK_TOL = 1e-6
STATIONARY_RESIDUAL_TOL = 1e-10
DENSE_NODE_LIMIT = 2000
POWER_ITER_TOL = 1e-12
POWER_ITER_MAX = 1_000_000


@dataclass(frozen=True)
class ResponseGraph:
    mode: str
    strategy_counts: tuple[int, ...]
    edges_src: np.ndarray
    edges_dst: np.ndarray
    scc_id: np.ndarray
    num_sccs: int
    sink_sccs: np.ndarray  # bool per component id

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.strategy_counts))

    def node_profile(self, node: int) -> tuple[int, ...]:
        if self.mode == SINGLE_POP:
            return (int(node),)
        return tuple(int(i) for i in np.unravel_index(node, self.strategy_counts))

    def profile_node(self, profile: Sequence[int]) -> int:
        if self.mode == SINGLE_POP:
            (s,) = profile
            return int(s)
        return int(np.ravel_multi_index(tuple(profile), self.strategy_counts))

    def sink_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.sink_sccs[self.scc_id])

    def sink_components(self) -> list[np.ndarray]:
        """Node arrays of the sink components, ordered by smallest member."""
        comps = [
            np.flatnonzero(self.scc_id == c)
            for c in range(self.num_sccs)
            if self.sink_sccs[c]
        ]
        comps.sort(key=lambda nodes: int(nodes[0]))
        return comps


def _deviation_deltas(game: NormalFormGame, mode: str):
    """Yield (player, src_nodes, dst_nodes, delta) over all ordered
    single-deviation pairs, vectorized per player.
    """
    if mode == SINGLE_POP:
        m1 = game.payoffs[0]
        n = m1.shape[0]
        src, dst = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        off = src != dst
        # Gain of the deviating copy: M^1(sigma, s) - M^1(s, sigma).
        delta = m1.T - m1
        yield 0, src[off], dst[off], delta[off]
        return
    counts = game.strategy_counts
    num_nodes = int(np.prod(counts))
    node_ids = np.arange(num_nodes).reshape(counts)
    for k in range(game.num_players):
        nk = counts[k]
        if nk == 1:
            continue
        ids = np.moveaxis(node_ids, k, -1).reshape(-1, nk)
        pay = np.moveaxis(game.payoffs[k], k, -1).reshape(-1, nk)
        # delta[r, a, b]: gain for player k moving a -> b with rest fixed.
        delta = pay[:, None, :] - pay[:, :, None]
        src = np.broadcast_to(ids[:, :, None], delta.shape)
        dst = np.broadcast_to(ids[:, None, :], delta.shape)
        off = np.broadcast_to(~np.eye(nk, dtype=bool), delta.shape)
        yield k, src[off], dst[off], delta[off]


def build_response_graph(
    game: NormalFormGame,
    mode: str = MULTI_POP,
    tie_tolerance: float = 0.0,
) -> ResponseGraph:
    if mode == SINGLE_POP:
        if game.num_players != 2 or not is_symmetric(game):
            raise InvalidInputError(
                "single-population mode requires a symmetric two-player game"
            )
        counts = (game.strategy_counts[0],)
    elif mode == MULTI_POP:
        counts = game.strategy_counts
    else:
        raise InvalidInputError(f"unknown mode: {mode!r}")

    num_nodes = int(np.prod(counts))
    srcs, dsts = [], []
    for _, src, dst, delta in _deviation_deltas(game, mode):
        keep = delta > tie_tolerance
        srcs.append(src[keep])
        dsts.append(dst[keep])
    edges_src = np.concatenate(srcs) if srcs else np.empty(0, dtype=int)
    edges_dst = np.concatenate(dsts) if dsts else np.empty(0, dtype=int)

    adj = sp.csr_matrix(
        (np.ones(len(edges_src), dtype=np.int8), (edges_src, edges_dst)),
        shape=(num_nodes, num_nodes),
    )
    num_sccs, scc_id = csgraph.connected_components(adj, directed=True,
                                                    connection="strong")
    sink = np.ones(num_sccs, dtype=bool)
    leaving = scc_id[edges_src] != scc_id[edges_dst]
    sink[scc_id[edges_src[leaving]]] = False
    return ResponseGraph(
        mode=mode,
        strategy_counts=tuple(counts),
        edges_src=edges_src,
        edges_dst=edges_dst,
        scc_id=scc_id,
        num_sccs=int(num_sccs),
        sink_sccs=sink,
    )


@dataclass(frozen=True)
class MarkovChain:
    matrix: sp.csr_matrix  # row-stochastic
    alpha: float
    m: int
    eta: float


def _fixation_probabilities(delta: np.ndarray, alpha: float, m: int) -> np.ndarray:
    """(1 - e^{-alpha d}) / (1 - e^{-alpha m d}), stable for large |alpha d|.

    Ties (d == 0) evaluate to 1/m, matching the chain's tie rule.
    """
    x = alpha * np.asarray(delta, dtype=float)
    rho = np.empty_like(x)
    tie = x == 0.0
    rho[tie] = 1.0 / m
    pos = x > 0.0
    if np.any(pos):
        xp = x[pos]
        rho[pos] = np.expm1(-xp) / np.expm1(-m * xp)
    neg = x < 0.0
    if np.any(neg):
        y = -x[neg]
        with np.errstate(under="ignore"):
            rho[neg] = (
                np.exp((1.0 - m) * y) * (-np.expm1(-y)) / (-np.expm1(-m * y))
            )
    return rho


def transition_matrix(
    graph: ResponseGraph,
    game: NormalFormGame,
    alpha: float,
    m: int = 50,
) -> MarkovChain:
    if alpha < 0:
        raise InvalidInputError("alpha must be nonnegative")
    if m < 1:
        raise InvalidInputError("m must be a positive integer")
    counts = graph.strategy_counts
    num_nodes = graph.num_nodes
    eta = 1.0 / sum(n - 1 for n in counts) if num_nodes > 1 else 1.0

    srcs, dsts, probs = [], [], []
    for _, src, dst, delta in _deviation_deltas(game, graph.mode):
        srcs.append(src)
        dsts.append(dst)
        probs.append(eta * _fixation_probabilities(delta, alpha, m))
    if srcs:
        src = np.concatenate(srcs)
        dst = np.concatenate(dsts)
        prob = np.concatenate(probs)
    else:
        src = dst = np.empty(0, dtype=int)
        prob = np.empty(0)
    self_prob = 1.0 - np.bincount(src, weights=prob, minlength=num_nodes)
    matrix = sp.csr_matrix(
        (
            np.concatenate([prob, self_prob]),
            (np.concatenate([src, np.arange(num_nodes)]),
             np.concatenate([dst, np.arange(num_nodes)])),
        ),
        shape=(num_nodes, num_nodes),
    )
    return MarkovChain(matrix=matrix, alpha=alpha, m=m, eta=eta)


@dataclass(frozen=True)
class AlphaRankResult:
    distribution: np.ndarray
    alpha_used: float | str  # a float, or "infinite"
    support: tuple[int, ...]
    residual: float
    diagnostics: dict = field(default_factory=dict)

    def mass_on(self, nodes) -> float:
        return float(self.distribution[np.asarray(list(nodes), dtype=int)].sum())


def _solve_stationary_dense(C: np.ndarray) -> np.ndarray:
    n = C.shape[0]
    A = C.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
    return pi


def _solve_stationary_sparse(C: sp.csr_matrix) -> np.ndarray:
    n = C.shape[0]
    A = (C.T - sp.identity(n, format="csr")).tolil()
    A[n - 1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    lu = spla.splu(A.tocsc())
    return lu.solve(b)


def _power_iteration(C: sp.csr_matrix) -> tuple[np.ndarray, int]:
    n = C.shape[0]
    pi = np.full(n, 1.0 / n)
    for it in range(1, POWER_ITER_MAX + 1):
        new = pi @ C
        new /= new.sum()
        if np.abs(new - pi).sum() < POWER_ITER_TOL:
            return new, it
        pi = new
    residual = float(np.abs(pi @ C - pi).sum())
    raise NumericalFailureError(
        f"power iteration did not converge (residual {residual:.3e})",
        residual=residual,
        iterations=POWER_ITER_MAX,
    )


def stationary_distribution(chain: MarkovChain) -> AlphaRankResult:
    """Unique stationary vector of the chain (pi C = pi, sum pi = 1)."""
    C = chain.matrix
    n = C.shape[0]
    iterations = 0
    if n <= DENSE_NODE_LIMIT:
        pi = _solve_stationary_dense(C.toarray())
    else:
        try:
            pi = _solve_stationary_sparse(C)
        except RuntimeError:
            pi = None
        if pi is None or not np.all(np.isfinite(pi)):
            pi, iterations = _power_iteration(C)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if pi.min() < -1e-9:
        pi, iterations = _power_iteration(C)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.abs(pi @ C - pi).max())
    if residual > STATIONARY_RESIDUAL_TOL:
        pi, iterations = _power_iteration(C)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        residual = float(np.abs(pi @ C - pi).max())
        if residual > STATIONARY_RESIDUAL_TOL:
            raise NumericalFailureError(
                f"stationary solve residual {residual:.3e} exceeds tolerance",
                residual=residual,
            )
    support = tuple(int(i) for i in np.flatnonzero(pi > OFF_SINK_TOL))
    return AlphaRankResult(
        distribution=pi,
        alpha_used=chain.alpha,
        support=support,
        residual=residual,
        diagnostics={"solver_iterations": iterations},
    )


def _off_sink_mass(pi: np.ndarray, graph: ResponseGraph) -> float:
    return float(1.0 - pi[graph.sink_nodes()].sum())


def alpharank(
    game: NormalFormGame,
    mode: str = MULTI_POP,
    alpha_policy="sweep",
    m: int = 50,
    graph: ResponseGraph | None = None,
) -> AlphaRankResult:
    """Ranking distribution under the requested alpha policy.

    alpha_policy is one of ``("fixed", alpha)``, ``"sweep"`` /
    ``("sweep", grid)``, or ``"infinite_limit"``.  The sweep walks the
    geometric grid and returns the first distribution that changed by less
    than SWEEP_L1_TOL since the previous grid point while placing all but
    OFF_SINK_TOL of its mass on sink components.  ``infinite_limit`` is the
    stabilized sweep value, reported with alpha_used = "infinite".
    """
    if graph is None:
        graph = build_response_graph(game, mode)
    infinite = alpha_policy == "infinite_limit"
    if infinite:
        alpha_policy = "sweep"
    if isinstance(alpha_policy, str):
        if alpha_policy != "sweep":
            raise InvalidInputError(f"unknown alpha policy: {alpha_policy!r}")
        policy = ("sweep", DEFAULT_ALPHA_GRID)
    else:
        policy = tuple(alpha_policy)

    kind = policy[0]
    if kind == "fixed":
        chain = transition_matrix(graph, game, alpha=float(policy[1]), m=m)
        return stationary_distribution(chain)
    if kind != "sweep":
        raise InvalidInputError(f"unknown alpha policy: {alpha_policy!r}")

    grid = [float(a) for a in policy[1]]
    if sorted(grid) != grid:
        raise InvalidInputError("alpha grid must be ascending")
    prev = None
    trajectory = []
    for alpha in grid:
        res = stationary_distribution(transition_matrix(graph, game, alpha, m=m))
        off_sink = _off_sink_mass(res.distribution, graph)
        l1 = float(np.abs(res.distribution - prev).sum()) if prev is not None else np.inf
        trajectory.append((alpha, l1, off_sink))
        if l1 < SWEEP_L1_TOL and off_sink < OFF_SINK_TOL:
            diagnostics = dict(res.diagnostics)
            diagnostics.update(sweep_trajectory=trajectory, off_sink_mass=off_sink)
            return AlphaRankResult(
                distribution=res.distribution,
                alpha_used="infinite" if infinite else alpha,
                support=res.support,
                residual=res.residual,
                diagnostics=diagnostics,
            )
        prev = res.distribution
    raise NumericalFailureError(
        "alpha sweep failed to stabilize",
        trajectory=trajectory,
    )


def to_dot(graph: ResponseGraph, node_labels=None) -> str:
    """DOT export of the improvement edges, for visual inspection."""
    if node_labels is None:
        node_labels = {
            i: "".join(map(str, graph.node_profile(i))) for i in range(graph.num_nodes)
        }
    lines = ["digraph response_graph {"]
    sink_nodes = set(graph.sink_nodes().tolist())
    for i in range(graph.num_nodes):
        shape = "doublecircle" if i in sink_nodes else "circle"
        lines.append(f'  n{i} [label="{node_labels[i]}", shape={shape}];')
    for s, d in zip(graph.edges_src, graph.edges_dst):
        lines.append(f"  n{int(s)} -> n{int(d)};")
    lines.append("}")
    return "\n".join(lines)
