"""Convergence and quality measures: NashConv, preference-based scores and
their gap, sink-component coverage, and policy-pool diversity.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import InvalidInputError, UnsupportedConfigurationError
from .games import MixedProfile, NormalFormGame, expected_payoffs
from .kuhn import KuhnPoker, best_response_to_mixture, mixture_expected_payoffs, policy_equal
from .meta_solvers import MetaDistribution
from .oracles import beats_matrix_multi_pop, beats_matrix_single_pop
from .response_graph import MULTI_POP, SINGLE_POP, ResponseGraph, build_response_graph

PCS_NODE_BUDGET = 5_000_000


def nashconv(game: NormalFormGame, profile: MixedProfile) -> float:
    """Sum over players of the exact best-response gain against the profile."""
    current = expected_payoffs(game, profile)
    total = 0.0
    for k, tensor in enumerate(game.payoffs):
        acc = tensor
        for axis in reversed(range(game.num_players)):
            if axis == k:
                continue
            acc = np.tensordot(acc, profile.per_player[axis], axes=([axis], [0]))
        total += float(acc.max() - current[k])
    return total


def lift_meta_distribution(game: NormalFormGame, populations,
                           meta_dist: MetaDistribution) -> MixedProfile:
    """Per-player meta marginals scattered onto the full strategy space."""
    if meta_dist.mode == SINGLE_POP:
        marginals = [meta_dist.per_player[0]] * game.num_players
        populations = [populations[0]] * game.num_players
    else:
        marginals = meta_dist.per_player
    vecs = []
    for k, (pop, weights) in enumerate(zip(populations, marginals)):
        v = np.zeros(game.strategy_counts[k])
        np.add.at(v, np.asarray(pop, dtype=int), weights)
        vecs.append(v)
    return MixedProfile(tuple(vecs))


def nashconv_kuhn(game: KuhnPoker, populations, meta_dist: MetaDistribution) -> float:
    """NashConv of the meta-distribution lifted through the policy pools.

    Each player's mixture is its meta marginal over its own pool; best
    responses are computed exactly against the opponents' mixtures.
    """
    mixtures = [
        [(pol, w) for pol, w in zip(pop, meta_dist.per_player[k])]
        for k, pop in enumerate(populations)
    ]
    current = mixture_expected_payoffs(game, mixtures)
    total = 0.0
    for k in range(game.num_players):
        opponents = {l: mixtures[l] for l in range(game.num_players) if l != k}
        _, value = best_response_to_mixture(game, opponents, k)
        total += value - current[k]
    return float(total)


def _sscc_weights(meta_game: NormalFormGame, meta_dist: MetaDistribution, mode: str):
    """Joint meta weights restricted to the union of meta sink components."""
    if meta_dist.meta_ssccs is not None:
        ssccs = meta_dist.meta_ssccs
    else:
        graph = build_response_graph(meta_game, mode)
        ssccs = tuple(tuple(int(n) for n in comp) for comp in graph.sink_components())
    joint = meta_dist.joint_tensor().ravel()
    weights = np.zeros(len(joint))
    for nodes in ssccs:
        idx = list(nodes)
        weights[idx] = joint[idx]
    return weights, ssccs


def pbr_score(game: NormalFormGame, meta_game: NormalFormGame, populations,
              meta_dist: MetaDistribution, player: int, candidate: int,
              mode: str = MULTI_POP) -> float:
    """Meta-weighted count of population profiles the candidate beats,
    restricted to meta sink components in the multi-population case.
    """
    if mode == SINGLE_POP:
        beats = beats_matrix_single_pop(game, populations[0])
        return float(beats[candidate].astype(float) @ meta_dist.per_player[0])
    weights, _ = _sscc_weights(meta_game, meta_dist, mode)
    beats = beats_matrix_multi_pop(game, populations, player)
    return float(beats[candidate].astype(float) @ weights)


def alpha_conv(game: NormalFormGame, meta_game: NormalFormGame, populations,
               meta_dist: MetaDistribution, mode: str = MULTI_POP) -> float:
    """Gap between the best achievable preference score and the best score
    already present in the population (summed over players when
    multi-population).
    """
    if mode == SINGLE_POP:
        beats = beats_matrix_single_pop(game, populations[0]).astype(float)
        scores = beats @ meta_dist.per_player[0]
        pop = np.asarray(populations[0], dtype=int)
        return float(scores.max() - scores[pop].max())
    weights, _ = _sscc_weights(meta_game, meta_dist, mode)
    total = 0.0
    for k, pop in enumerate(populations):
        beats = beats_matrix_multi_pop(game, populations, k).astype(float)
        scores = beats @ weights
        total += scores.max() - scores[np.asarray(pop, dtype=int)].max()
    return float(total)


def pcs_score(game: NormalFormGame, meta_game: NormalFormGame, populations,
              meta_dist: MetaDistribution, full_graph: ResponseGraph | None = None,
              mode: str = MULTI_POP,
              node_budget: int = PCS_NODE_BUDGET) -> float:
    """Fraction of meta-sink-component profiles lying in the underlying
    game's sink components (profiles counted once across components).
    """
    if game.num_profiles > node_budget:
        raise UnsupportedConfigurationError(
            f"full-game sink analysis needs {game.num_profiles} nodes, "
            f"budget is {node_budget}"
        )
    if full_graph is None:
        full_graph = build_response_graph(game, mode)
    _, ssccs = _sscc_weights(meta_game, meta_dist, mode)
    if mode == SINGLE_POP:
        pops = [populations[0]]
        counts = (len(populations[0]),)
    else:
        pops = populations
        counts = tuple(len(p) for p in populations)
    sink = full_graph.sink_sccs[full_graph.scc_id]
    profiles = set()
    for nodes in ssccs:
        for node in nodes:
            meta_profile = np.unravel_index(node, counts) if mode == MULTI_POP \
                else (node,)
            underlying = tuple(int(pops[k][i]) for k, i in enumerate(meta_profile))
            profiles.add(underlying)
    if not profiles:
        raise InvalidInputError("meta-game has no sink-component profiles")
    in_sink = sum(1 for p in profiles if sink[full_graph.profile_node(p)])
    return in_sink / len(profiles)


def diversity(populations: Sequence[Sequence], equal=policy_equal) -> tuple[int, ...]:
    """Per-player count of pairwise-distinct policies."""
    counts = []
    for pop in populations:
        unique = []
        for pol in pop:
            if not any(equal(pol, other) for other in unique):
                unique.append(pol)
        counts.append(len(unique))
    return tuple(counts)
