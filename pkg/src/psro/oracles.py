"""Population-expansion oracles for normal-form games: best response,
preference-based best response (single- and multi-population, per sink
component of the meta response graph), the novelty-bound variant, and
rectified best response.

A preference-based score of a candidate sigma for player k is the
meta-distribution-weighted count of population profiles it beats:
sum_i pi_i * 1[M^k(sigma, s_i^{-k}) > M^k(s_i)].  Oracles only return
strategies whose score is strictly positive; an empty proposal list means the
player has nothing to add this round.  Ties in score break toward the higher
expected payoff against the same weights, then toward the smaller index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, UnsupportedConfigurationError
from .games import NormalFormGame
from .meta_solvers import MetaDistribution
from .response_graph import MULTI_POP, SINGLE_POP, build_response_graph


@dataclass(frozen=True)
class OracleConfig:
    kind: str = "br"  # br | pbr | pbr_novelty_bound | rectified_br
    beats_tolerance: float = 0.0

    def __post_init__(self):
        if self.beats_tolerance < 0:
            raise InvalidInputError("beats_tolerance must be nonnegative")


@dataclass(frozen=True)
class OracleProposal:
    strategy: object  # pure-strategy index for NFGs, policy object otherwise
    score: float
    meta_sscc: int | None = None


@dataclass(frozen=True)
class OracleOutput:
    proposals: tuple[tuple[OracleProposal, ...], ...]  # per player
    converged: tuple[bool, ...]
    diagnostics: dict = field(default_factory=dict)


def _lex_min_argmax(scores: np.ndarray, candidates=None) -> tuple[int, tuple[int, ...]]:
    """(selected, full argmax set) over candidate indices (default: all)."""
    if candidates is None:
        candidates = np.arange(len(scores))
    candidates = np.asarray(candidates, dtype=int)
    vals = scores[candidates]
    best = vals.max()
    argmax = candidates[vals == best]
    return int(argmax[0]), tuple(int(i) for i in argmax)


# ---------------------------------------------------------------------------
# Beats indicators.
# ---------------------------------------------------------------------------


def beats_values_single_pop(game: NormalFormGame, population: Sequence[int],
                            beats_tolerance: float = 0.0):
    """(B, V): B[sigma, i] = 1 iff candidate sigma beats population member i;
    V[sigma, i] = M^1(sigma, s_i), used for payoff tie-breaking.
    """
    if game.num_players != 2:
        raise InvalidInputError("single-population scoring needs a two-player game")
    pop = np.asarray(population, dtype=int)
    m1, m2 = game.payoffs
    values = m1[:, pop]
    return (values - m2[:, pop]) > beats_tolerance, values


def beats_matrix_single_pop(game, population, beats_tolerance: float = 0.0):
    return beats_values_single_pop(game, population, beats_tolerance)[0]


def beats_values_multi_pop(game: NormalFormGame, populations, player: int,
                           beats_tolerance: float = 0.0):
    """(B, V) over meta profiles (C-order over population sizes):
    B[sigma, node] = 1 iff switching player to sigma at the node's profile
    strictly gains; V[sigma, node] = M^player(sigma, s_node^{-player}).
    """
    idx_cur = np.ix_(*[np.asarray(p, dtype=int) for p in populations])
    cur = game.payoffs[player][idx_cur]
    idx_alt = np.ix_(*[
        np.arange(game.strategy_counts[i]) if i == player else np.asarray(p, dtype=int)
        for i, p in enumerate(populations)
    ])
    alt = game.payoffs[player][idx_alt]
    alt = np.moveaxis(alt, player, 0)
    alt = np.expand_dims(alt, axis=player + 1)
    n_k = game.strategy_counts[player]
    values = np.broadcast_to(alt, (n_k,) + cur.shape).reshape(n_k, -1)
    beats = (alt - np.expand_dims(cur, 0) > beats_tolerance).reshape(n_k, -1)
    return beats, values


def beats_matrix_multi_pop(game, populations, player: int,
                           beats_tolerance: float = 0.0):
    return beats_values_multi_pop(game, populations, player, beats_tolerance)[0]


# ---------------------------------------------------------------------------
# Oracles on normal-form games.
# ---------------------------------------------------------------------------


def nfg_best_response(game: NormalFormGame, populations, meta_dist: MetaDistribution,
                      player: int, mode: str):
    """(strategy, value, argmax set) against the opponents' meta-mixture."""
    if any(len(p) == 0 for p in populations):
        raise InvalidInputError("populations must be nonempty")
    if mode == SINGLE_POP:
        pop = np.asarray(populations[0], dtype=int)
        weights = meta_dist.per_player[0]
        values = game.payoffs[0][:, pop] @ weights
    else:
        weights = meta_dist.opponent_marginal(player)
        idx = np.ix_(*[
            np.arange(game.strategy_counts[i]) if i == player
            else np.asarray(p, dtype=int)
            for i, p in enumerate(populations)
        ])
        sub = np.moveaxis(game.payoffs[player][idx], player, -1)
        values = np.tensordot(weights, sub, axes=weights.ndim)
    selected, argmax = _lex_min_argmax(values)
    return selected, float(values[selected]), argmax


def _meta_ssccs(meta_game: NormalFormGame, meta_dist: MetaDistribution, mode: str):
    if meta_dist.meta_ssccs is not None:
        return meta_dist.meta_ssccs
    graph = build_response_graph(meta_game, mode)
    return tuple(tuple(int(n) for n in comp) for comp in graph.sink_components())


def _select_from_argmax(scores: np.ndarray, values: np.ndarray, candidates):
    """Best score, with payoff then index as tie-breakers."""
    candidates = np.asarray(candidates, dtype=int)
    vals = scores[candidates]
    best = vals.max()
    argmax = candidates[vals == best]
    selected = int(argmax[np.argmax(values[argmax])])
    return selected, tuple(int(i) for i in argmax)


def _pbr_proposals_for_player(beats: np.ndarray, values: np.ndarray,
                              node_weights_per_sscc, population,
                              novelty_bound: bool):
    proposals = []
    argmax_sets = []
    pop_set = set(int(s) for s in population)
    every = np.arange(beats.shape[0])
    for sscc_idx, weights in node_weights_per_sscc:
        scores = beats @ weights
        payoff = values @ weights
        if novelty_bound:
            candidates = [s for s in every if s not in pop_set]
            if not candidates:
                continue
        else:
            candidates = every
        selected, argmax = _select_from_argmax(scores, payoff, candidates)
        argmax_sets.append((sscc_idx, argmax, float(scores[selected])))
        if scores[selected] > 0.0:
            proposals.append(OracleProposal(strategy=selected,
                                            score=float(scores[selected]),
                                            meta_sscc=sscc_idx))
    # Deduplicate while keeping (sscc, strategy) discovery order.
    seen, unique = set(), []
    for prop in proposals:
        if prop.strategy not in seen:
            seen.add(prop.strategy)
            unique.append(prop)
    return tuple(unique), argmax_sets


def pbr_single_pop(game: NormalFormGame, population, meta_dist: MetaDistribution,
                   beats_tolerance: float = 0.0,
                   novelty_bound: bool = False) -> OracleOutput:
    """Preference-based best response over one shared population:
    score(sigma) = sum_i pi_i 1[M^1(sigma, s_i) > M^2(sigma, s_i)].
    """
    beats, values = beats_values_single_pop(game, population, beats_tolerance)
    weights = [(None, meta_dist.per_player[0])]
    proposals, argmax_sets = _pbr_proposals_for_player(
        beats.astype(float), values, weights, population, novelty_bound)
    converged = all(p.strategy in set(population) for p in proposals)
    return OracleOutput(
        proposals=(proposals,),
        converged=(converged,),
        diagnostics={"argmax_sets": {0: argmax_sets}},
    )


def pbr_multi_pop(game: NormalFormGame, meta_game: NormalFormGame, populations,
                  meta_dist: MetaDistribution, beats_tolerance: float = 0.0,
                  novelty_bound: bool = False) -> OracleOutput:
    """Per-sink-component preference-based best response (one proposal per
    player per meta sink component, deduplicated within a player).

    The meta-distribution restricted to each component is used unrenormalized;
    the argmax is invariant to its positive scale.
    """
    ssccs = _meta_ssccs(meta_game, meta_dist, MULTI_POP)
    joint = meta_dist.joint_tensor().ravel()
    weights = []
    for idx, nodes in enumerate(ssccs):
        w = np.zeros(len(joint))
        node_list = list(nodes)
        w[node_list] = joint[node_list]
        weights.append((idx, w))
    proposals, converged, diag = [], [], {}
    for k, population in enumerate(populations):
        beats, values = beats_values_multi_pop(game, populations, k,
                                               beats_tolerance)
        props, argmax_sets = _pbr_proposals_for_player(
            beats.astype(float), values, weights, population, novelty_bound)
        proposals.append(props)
        converged.append(all(p.strategy in set(population) for p in props))
        diag[k] = argmax_sets
    return OracleOutput(
        proposals=tuple(proposals),
        converged=tuple(converged),
        diagnostics={"argmax_sets": diag},
    )


def rectified_opponent_sets(own_payoffs: np.ndarray, own_mass: np.ndarray,
                            opp_weights: np.ndarray,
                            beats_tolerance: float = 0.0):
    """Per supported own strategy, the opponents it beats or ties and the
    restricted (renormalized) mixture over them.

    own_payoffs[i, j] is the player's meta payoff of its strategy i against
    the opponent's strategy j.  Strategies beating nothing are skipped and
    reported.  When the restricted mixture has zero mass the weights fall back
    to uniform over the beaten set.
    """
    targets, skipped = [], []
    for i in np.flatnonzero(own_mass > 0):
        beaten = np.flatnonzero(own_payoffs[i] >= -beats_tolerance)
        if beaten.size == 0:
            skipped.append(int(i))
            continue
        w = opp_weights[beaten]
        total = w.sum()
        w = w / total if total > 0 else np.full(beaten.size, 1.0 / beaten.size)
        targets.append((int(i), beaten, w))
    return targets, skipped


def nfg_rectified_br(game: NormalFormGame, meta_game: NormalFormGame, populations,
                     meta_dist: MetaDistribution, player: int,
                     beats_tolerance: float = 0.0):
    """Rectified best responses for one player of a two-player game."""
    if game.num_players != 2:
        raise UnsupportedConfigurationError("rectified_br handles two players only")
    opp = 1 - player
    own_payoffs = meta_game.payoffs[player]
    if player == 1:
        own_payoffs = own_payoffs.T
    targets, skipped = rectified_opponent_sets(
        own_payoffs, meta_dist.per_player[player], meta_dist.per_player[opp],
        beats_tolerance)
    pop_opp = np.asarray(populations[opp], dtype=int)
    full = game.payoffs[player] if player == 0 else game.payoffs[player].T
    proposals, seen = [], set()
    for i, beaten, w in targets:
        values = full[:, pop_opp[beaten]] @ w
        selected, _ = _lex_min_argmax(values)
        if selected not in seen:
            seen.add(selected)
            proposals.append(OracleProposal(strategy=selected,
                                            score=float(values[selected]),
                                            meta_sscc=None))
    return tuple(proposals), skipped


def propose(game: NormalFormGame, meta_game: NormalFormGame, populations,
            meta_dist: MetaDistribution, config: OracleConfig,
            mode: str) -> OracleOutput:
    """Run the configured oracle for every player on a normal-form game."""
    if mode == SINGLE_POP:
        if config.kind == "br":
            strategy, value, argmax = nfg_best_response(
                game, populations, meta_dist, 0, mode)
            prop = OracleProposal(strategy=strategy, score=value)
            return OracleOutput(
                proposals=((prop,),),
                converged=(strategy in set(populations[0]),),
                diagnostics={"argmax_sets": {0: argmax}},
            )
        if config.kind in ("pbr", "pbr_novelty_bound"):
            return pbr_single_pop(game, populations[0], meta_dist,
                                  config.beats_tolerance,
                                  novelty_bound=config.kind == "pbr_novelty_bound")
        raise UnsupportedConfigurationError(
            f"oracle {config.kind!r} is not defined in single-population mode")

    if config.kind == "br":
        proposals, converged, diag = [], [], {}
        for k in range(game.num_players):
            strategy, value, argmax = nfg_best_response(
                game, populations, meta_dist, k, mode)
            proposals.append((OracleProposal(strategy=strategy, score=value),))
            converged.append(strategy in set(populations[k]))
            diag[k] = argmax
        return OracleOutput(proposals=tuple(proposals), converged=tuple(converged),
                            diagnostics={"argmax_sets": diag})
    if config.kind in ("pbr", "pbr_novelty_bound"):
        return pbr_multi_pop(game, meta_game, populations, meta_dist,
                             config.beats_tolerance,
                             novelty_bound=config.kind == "pbr_novelty_bound")
    if config.kind == "rectified_br":
        proposals, converged, diag = [], [], {}
        for k in range(game.num_players):
            props, skipped = nfg_rectified_br(game, meta_game, populations,
                                              meta_dist, k, config.beats_tolerance)
            proposals.append(props)
            converged.append(all(p.strategy in set(populations[k]) for p in props))
            diag[k] = {"skipped": skipped}
        return OracleOutput(proposals=tuple(proposals), converged=tuple(converged),
                            diagnostics={"rectified": diag})
    raise InvalidInputError(f"unknown oracle kind: {config.kind!r}")
