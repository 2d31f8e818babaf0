"""K-player Kuhn poker: exact expected values and exact best responses.

Rules (2 <= K <= 5): deck of K+1 ranked cards, each player dealt one card and
antes 1 chip.  A single betting round proceeds in seat order: before any bet a
player may pass or bet 1 chip; once a bet is made, each of the other players
in cyclic order after the bettor either calls (1 chip) or folds.  No raises.
The highest card among non-folded players takes the pot.

Actions are encoded as "p" (pass/fold) and "b" (bet/call), in that order; ties
in action values break toward "p".  Information states are strings
"seat:card:history".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

ACTIONS = ("p", "b")
POLICY_ATOL = 1e-12
POLICY_EQ_ATOL = 1e-9


def _history_state(num_players: int, history: str):
    """(actor, terminal): actor is the seat to act, or None when terminal."""
    bet_at = history.find("b")
    if bet_at < 0:
        if len(history) == num_players:
            return None, True
        return len(history), False
    if len(history) == bet_at + num_players:
        return None, True
    return (len(history)) % num_players, False


@dataclass(frozen=True)
class KuhnPoker:
    num_players: int

    def __post_init__(self):
        if not 2 <= self.num_players <= 5:
            raise InvalidInputError("Kuhn poker supports 2 to 5 players")

    @property
    def num_cards(self) -> int:
        return self.num_players + 1

    def deals(self) -> list[tuple[int, ...]]:
        return list(itertools.permutations(range(self.num_cards), self.num_players))

    @property
    def chance_prob(self) -> float:
        return 1.0 / len(self.deals())

    def actor(self, history: str) -> int | None:
        actor, terminal = _history_state(self.num_players, history)
        return None if terminal else actor

    def is_terminal(self, history: str) -> bool:
        return _history_state(self.num_players, history)[1]

    def histories(self) -> list[str]:
        """All betting histories (card-independent), root first."""
        out, stack = [], [""]
        while stack:
            h = stack.pop()
            out.append(h)
            if not self.is_terminal(h):
                for a in reversed(ACTIONS):
                    stack.append(h + a)
        return out

    def infostate(self, seat: int, card: int, history: str) -> str:
        return f"{seat}:{card}:{history}"

    def infostates(self, player: int) -> list[str]:
        """All decision information states of one player."""
        out = []
        for h in self.histories():
            if self.actor(h) == player:
                for card in range(self.num_cards):
                    out.append(self.infostate(player, card, h))
        return out

    def terminal_payoffs(self, deal: tuple[int, ...], history: str) -> np.ndarray:
        K = self.num_players
        contrib = np.ones(K)  # antes
        active = np.ones(K, dtype=bool)
        bet_at = history.find("b")
        if bet_at >= 0:
            contrib[bet_at] += 1.0
            for j, a in enumerate(history[bet_at + 1:], start=1):
                seat = (bet_at + j) % K
                if a == "b":
                    contrib[seat] += 1.0
                else:
                    active[seat] = False
        cards = np.asarray(deal)
        winner = int(np.flatnonzero(active)[np.argmax(cards[active])])
        payoffs = -contrib
        payoffs[winner] += contrib.sum()
        return payoffs


@dataclass(frozen=True)
class BehavioralPolicy:
    """Tabular policy: information state -> probabilities over ACTIONS."""

    player: int
    table: dict

    def __post_init__(self):
        for key, probs in self.table.items():
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (len(ACTIONS),) or abs(probs.sum() - 1.0) > POLICY_ATOL \
                    or np.any(probs < -POLICY_ATOL):
                raise InvalidInputError(f"bad action distribution at {key}: {probs}")
            probs.setflags(write=False)
            self.table[key] = probs

    def probs(self, infostate: str) -> np.ndarray:
        try:
            return self.table[infostate]
        except KeyError:
            raise InvalidInputError(f"policy missing information state {infostate!r}")


def uniform_policy(game: KuhnPoker, player: int) -> BehavioralPolicy:
    table = {i: np.array([0.5, 0.5]) for i in game.infostates(player)}
    return BehavioralPolicy(player=player, table=table)


def policy_equal(a: BehavioralPolicy, b: BehavioralPolicy,
                 atol: float = POLICY_EQ_ATOL) -> bool:
    if a.player != b.player or set(a.table) != set(b.table):
        return False
    return all(np.allclose(a.table[k], b.table[k], rtol=0.0, atol=atol)
               for k in a.table)


def policy_to_dict(policy: BehavioralPolicy) -> dict:
    return {k: list(map(float, v)) for k, v in sorted(policy.table.items())}


def policy_from_dict(player: int, data: dict) -> BehavioralPolicy:
    return BehavioralPolicy(player=player,
                            table={k: np.asarray(v, float) for k, v in data.items()})


# ---------------------------------------------------------------------------
# Exact evaluation.  Every player may be a mixture: a list of (policy, weight)
# pairs sampled independently per episode.  Along a tree walk we carry one
# reach vector per player (one entry per mixture component); the joint weight
# of a terminal is the product over players of (weights . reach vector).
# ---------------------------------------------------------------------------


def _as_mixture(policy_or_mixture):
    if isinstance(policy_or_mixture, BehavioralPolicy):
        return [(policy_or_mixture, 1.0)]
    return list(policy_or_mixture)


def mixture_expected_payoffs(game: KuhnPoker, mixtures) -> np.ndarray:
    """Exact expected payoff vector when each player plays a policy mixture."""
    if len(mixtures) != game.num_players:
        raise InvalidInputError("need one policy (or mixture) per player")
    mixtures = [_as_mixture(m) for m in mixtures]
    weights = [np.array([w for _, w in mix]) for mix in mixtures]
    total = np.zeros(game.num_players)

    def walk(deal, history, reach):
        nonlocal total
        actor, terminal = _history_state(game.num_players, history)
        if terminal:
            w = game.chance_prob
            for k in range(game.num_players):
                w *= float(weights[k] @ reach[k])
            total += w * game.terminal_payoffs(deal, history)
            return
        info = game.infostate(actor, deal[actor], history)
        for ai, action in enumerate(ACTIONS):
            probs = np.array([pol.probs(info)[ai] for pol, _ in mixtures[actor]])
            new_reach = list(reach)
            new_reach[actor] = reach[actor] * probs
            walk(deal, history + action, new_reach)

    for deal in game.deals():
        walk(deal, "", [np.ones(len(mix)) for mix in mixtures])
    return total


def exact_expected_payoffs(game: KuhnPoker, joint_policy) -> np.ndarray:
    """Exact expected payoffs under one behavioral policy per player."""
    return mixture_expected_payoffs(game, list(joint_policy))


def best_response_to_mixture(game: KuhnPoker, opponent_mixtures: dict, player: int):
    """Exact best response for `player` against fixed opponent mixtures.

    opponent_mixtures maps every other seat to a policy or mixture.  Returns
    (policy, value): a deterministic policy over all of the player's
    information states and its exact expected payoff.
    """
    K = game.num_players
    opp = {}
    for k in range(K):
        if k == player:
            continue
        if k not in opponent_mixtures:
            raise InvalidInputError(f"missing policy for opponent seat {k}")
        opp[k] = _as_mixture(opponent_mixtures[k])
    opp_weights = {k: np.array([w for _, w in mix]) for k, mix in opp.items()}

    # Forward pass: per (deal, history) node, opponents' per-component reach.
    # Children of a node differ only in the acting player's reach vector.
    by_info: dict[str, list] = {}

    def forward(deal, history, reach):
        actor, terminal = _history_state(K, history)
        if terminal:
            return
        info = game.infostate(actor, deal[actor], history)
        if actor == player:
            by_info.setdefault(info, []).append((deal, history, dict(reach)))
            forward(deal, history + "p", reach)
            forward(deal, history + "b", reach)
            return
        for ai, action in enumerate(ACTIONS):
            probs = np.array([pol.probs(info)[ai] for pol, _ in opp[actor]])
            new_reach = dict(reach)
            new_reach[actor] = reach[actor] * probs
            forward(deal, history + action, new_reach)

    for deal in game.deals():
        forward(deal, "", {k: np.ones(len(mix)) for k, mix in opp.items()})

    chosen: dict[str, int] = {}

    def node_value(deal, history, reach):
        """Opponent-reach-weighted value to `player`, under the BR plan."""
        actor, terminal = _history_state(K, history)
        if terminal:
            w = game.chance_prob
            for k, mix_w in opp_weights.items():
                w *= float(mix_w @ reach[k])
            return w * game.terminal_payoffs(deal, history)[player]
        info = game.infostate(actor, deal[actor], history)
        if actor == player:
            return node_value(deal, history + ACTIONS[resolve(info)], reach)
        total = 0.0
        for ai, action in enumerate(ACTIONS):
            probs = np.array([pol.probs(info)[ai] for pol, _ in opp[actor]])
            new_reach = dict(reach)
            new_reach[actor] = reach[actor] * probs
            total += node_value(deal, history + action, new_reach)
        return total

    def resolve(info: str) -> int:
        if info in chosen:
            return chosen[info]
        values = []
        for ai, action in enumerate(ACTIONS):
            v = sum(node_value(deal, history + action, reach)
                    for deal, history, reach in by_info[info])
            values.append(v)
        # Strict improvement required to move off the first action.
        best = 0 if values[0] >= values[1] - 1e-12 else 1
        chosen[info] = best
        return best

    table = {}
    for info in game.infostates(player):
        ai = resolve(info) if info in by_info else 0
        probs = np.zeros(len(ACTIONS))
        probs[ai] = 1.0
        table[info] = probs
    policy = BehavioralPolicy(player=player, table=table)

    value = 0.0
    for deal in game.deals():
        value += node_value(deal, "", {k: np.ones(len(mix)) for k, mix in opp.items()})
    return policy, float(value)


def exact_best_response(game: KuhnPoker, joint_policy, player: int):
    """Best response against the other players' fixed behavioral policies."""
    opponents = {k: joint_policy[k] for k in range(game.num_players) if k != player}
    return best_response_to_mixture(game, opponents, player)


def simulate(game: KuhnPoker, joint_policy, episodes: int, rng_seed=0) -> np.ndarray:
    """Seeded Monte Carlo estimate of the expected payoff vector."""
    if episodes < 1:
        raise InvalidInputError("episodes must be >= 1")
    rng = np.random.default_rng(rng_seed)
    deals = game.deals()
    total = np.zeros(game.num_players)
    for _ in range(episodes):
        deal = deals[rng.integers(len(deals))]
        history = ""
        while not game.is_terminal(history):
            actor = game.actor(history)
            probs = joint_policy[actor].probs(
                game.infostate(actor, deal[actor], history))
            history += ACTIONS[int(rng.random() >= probs[0])]
        total += game.terminal_payoffs(deal, history)
    return total / episodes
