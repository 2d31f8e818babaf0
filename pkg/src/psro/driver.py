"""The complete / solve / expand loop over growing policy populations.

Each iteration completes the missing meta-payoff entries, computes the
meta-distribution with the configured solver, and asks the oracle for new
strategies; every proposed strategy not already in its player's population is
appended.  The loop terminates when no player receives a new strategy.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kuhn as kuhn_mod
from . import meta_solvers, metrics as metrics_mod, oracles
from .errors import InvalidInputError, UnsupportedConfigurationError
from .games import NormalFormGame
from .kuhn import BehavioralPolicy, KuhnPoker
from .meta_solvers import MetaDistribution, MetaSolverConfig
from .oracles import OracleConfig
from .response_graph import MULTI_POP, SINGLE_POP, ResponseGraph, build_response_graph


@dataclass(frozen=True)
class Population:
    """Per-player strategy pools plus the (partially) completed meta-game.

    Multi-population: tables[k] has shape pop_sizes and holds player k's meta
    payoffs.  Single-population: one shared pool; tables = (m1,) with
    m1[i, j] the row payoff of pool strategy i against j.
    """

    mode: str
    strategies: tuple[tuple, ...]
    tables: tuple[np.ndarray, ...]
    mask: np.ndarray
    evaluations: int = 0

    @property
    def pop_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.strategies)

    @property
    def total_pool_length(self) -> int:
        return sum(self.pop_sizes)

    def meta_game(self) -> NormalFormGame:
        if self.mode == SINGLE_POP:
            m1 = self.tables[0]
            return NormalFormGame((m1, m1.T))
        return NormalFormGame(self.tables)

    def extend(self, additions: Sequence[Sequence]) -> "Population":
        if len(additions) != len(self.strategies):
            raise InvalidInputError("one addition list per population required")
        new_strategies = tuple(
            tuple(s) + tuple(add) for s, add in zip(self.strategies, additions)
        )
        if self.mode == SINGLE_POP:
            n = len(new_strategies[0])
            shape = (n, n)
        else:
            shape = tuple(len(s) for s in new_strategies)
        old = self.mask.shape
        tables = []
        for t in self.tables:
            grown = np.full(shape, np.nan)
            grown[tuple(slice(0, o) for o in old)] = t
            tables.append(grown)
        mask = np.zeros(shape, dtype=bool)
        mask[tuple(slice(0, o) for o in old)] = self.mask
        return replace(self, strategies=new_strategies, tables=tuple(tables),
                       mask=mask)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    pop_sizes: tuple[int, ...]
    total_pool_length: int
    meta_marginals: tuple[tuple[float, ...], ...]
    added: tuple[tuple[str, ...], ...]
    converged: bool
    metrics: dict
    wall_clock: float


@dataclass
class PsroTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def metric_columns(self) -> list[str]:
        cols: list[str] = []
        for rec in self.records:
            for key in rec.metrics:
                if key not in cols:
                    cols.append(key)
        return cols

    def to_csv(self, path) -> None:
        cols = self.metric_columns()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "total_pool_length", *cols])
            for rec in self.records:
                row = [rec.iteration, rec.total_pool_length]
                row += [repr(rec.metrics[c]) if c in rec.metrics else ""
                        for c in cols]
                writer.writerow(row)

    def to_jsonl(self, path, include_timings: bool = False) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                data = {
                    "iteration": rec.iteration,
                    "pop_sizes": list(rec.pop_sizes),
                    "total_pool_length": rec.total_pool_length,
                    "meta_marginals": [list(m) for m in rec.meta_marginals],
                    "added": [list(a) for a in rec.added],
                    "converged": rec.converged,
                    "metrics": rec.metrics,
                }
                if include_timings:
                    data["wall_clock"] = rec.wall_clock
                fh.write(json.dumps(data) + "\n")


@dataclass(frozen=True)
class PsroConfig:
    meta_solver: MetaSolverConfig = MetaSolverConfig()
    oracle: OracleConfig = OracleConfig()
    mode: str = MULTI_POP
    rng_seed: int = 0
    max_iterations: int = 50
    metrics: tuple[str, ...] = ()
    payoff_mode: str = "exact"  # "exact" or "simulate"
    sim_episodes: int = 100
    start_profile: tuple[int, ...] | None = None


class NfgPsroContext:
    """PSRO over a normal-form game: strategies are pure indices."""

    def __init__(self, game: NormalFormGame, config: PsroConfig,
                 full_graph: ResponseGraph | None = None):
        if config.mode == SINGLE_POP and config.oracle.kind == "rectified_br":
            raise UnsupportedConfigurationError(
                "rectified_br runs in multi-population mode")
        self.game = game
        self.config = config
        self._full_graph = full_graph

    @property
    def num_populations(self) -> int:
        return 1 if self.config.mode == SINGLE_POP else self.game.num_players

    def full_graph(self) -> ResponseGraph:
        if self._full_graph is None:
            self._full_graph = build_response_graph(self.game, self.config.mode)
        return self._full_graph

    def initialize(self) -> Population:
        rng = np.random.default_rng(self.config.rng_seed)
        if self.config.start_profile is not None:
            start = tuple(self.config.start_profile)
            if len(start) != self.num_populations:
                raise InvalidInputError("start profile has wrong length")
        else:
            start = tuple(
                int(rng.integers(self.game.strategy_counts[k]))
                for k in range(self.num_populations)
            )
        strategies = tuple((s,) for s in start)
        if self.config.mode == SINGLE_POP:
            shape = (1, 1)
        else:
            shape = (1,) * self.game.num_players
        tables = tuple(np.full(shape, np.nan)
                       for _ in range(1 if self.config.mode == SINGLE_POP
                                      else self.game.num_players))
        mask = np.zeros(shape, dtype=bool)
        return Population(mode=self.config.mode, strategies=strategies,
                          tables=tables, mask=mask)

    def complete(self, pop: Population) -> Population:
        missing = np.argwhere(~pop.mask)
        if missing.size == 0:
            return pop
        if pop.mode == SINGLE_POP:
            pool = np.asarray(pop.strategies[0], dtype=int)
            rows = pool[missing[:, 0]]
            cols = pool[missing[:, 1]]
            values = [self.game.payoffs[0][rows, cols]]
        else:
            coords = tuple(
                np.asarray(pop.strategies[k], dtype=int)[missing[:, k]]
                for k in range(self.game.num_players)
            )
            values = [t[coords] for t in self.game.payoffs]
        tables = [t.copy() for t in pop.tables]
        flat = tuple(missing[:, i] for i in range(missing.shape[1]))
        for table, vals in zip(tables, values):
            table[flat] = vals
        mask = pop.mask.copy()
        mask[flat] = True
        return replace(pop, tables=tuple(tables), mask=mask,
                       evaluations=pop.evaluations + len(missing))

    def propose(self, pop: Population, meta_game: NormalFormGame,
                dist: MetaDistribution) -> oracles.OracleOutput:
        return oracles.propose(self.game, meta_game, pop.strategies, dist,
                               self.config.oracle, self.config.mode)

    def contains(self, pop: Population, player: int, strategy) -> bool:
        return strategy in set(pop.strategies[player])

    def describe(self, strategy) -> str:
        return str(strategy)

    def compute_metrics(self, pop: Population, meta_game: NormalFormGame,
                        dist: MetaDistribution) -> dict:
        out = {}
        for name in self.config.metrics:
            if name == "nashconv":
                lifted = metrics_mod.lift_meta_distribution(
                    self.game, pop.strategies, dist)
                out[name] = metrics_mod.nashconv(self.game, lifted)
            elif name == "alpha_conv":
                out[name] = metrics_mod.alpha_conv(
                    self.game, meta_game, pop.strategies, dist, self.config.mode)
            elif name == "pcs_score":
                out[name] = metrics_mod.pcs_score(
                    self.game, meta_game, pop.strategies, dist,
                    full_graph=self.full_graph(), mode=self.config.mode)
            else:
                raise InvalidInputError(f"unknown metric {name!r} for NFG runs")
        return out


class KuhnPsroContext:
    """PSRO over Kuhn poker: strategies are tabular behavioral policies."""

    def __init__(self, game: KuhnPoker, config: PsroConfig):
        if config.mode != MULTI_POP:
            raise UnsupportedConfigurationError("poker runs are multi-population")
        if config.oracle.kind in ("pbr", "pbr_novelty_bound"):
            raise UnsupportedConfigurationError(
                "preference-based oracles are defined on normal-form games; "
                "use br or rectified_br for poker")
        if config.payoff_mode not in ("exact", "simulate"):
            raise InvalidInputError(f"unknown payoff mode {config.payoff_mode!r}")
        self.game = game
        self.config = config

    @property
    def num_populations(self) -> int:
        return self.game.num_players

    def initialize(self) -> Population:
        strategies = tuple(
            (kuhn_mod.uniform_policy(self.game, k),)
            for k in range(self.game.num_players)
        )
        shape = (1,) * self.game.num_players
        tables = tuple(np.full(shape, np.nan) for _ in range(self.game.num_players))
        return Population(mode=MULTI_POP, strategies=strategies, tables=tables,
                          mask=np.zeros(shape, dtype=bool))

    def _evaluate(self, profile_indices, joint) -> np.ndarray:
        if self.config.payoff_mode == "exact":
            return kuhn_mod.exact_expected_payoffs(self.game, joint)
        seed = np.random.SeedSequence(
            entropy=self.config.rng_seed, spawn_key=tuple(profile_indices))
        return kuhn_mod.simulate(self.game, joint, self.config.sim_episodes,
                                 rng_seed=seed)

    def complete(self, pop: Population) -> Population:
        missing = np.argwhere(~pop.mask)
        if missing.size == 0:
            return pop
        tables = [t.copy() for t in pop.tables]
        for entry in missing:
            joint = [pop.strategies[k][entry[k]]
                     for k in range(self.game.num_players)]
            values = self._evaluate(entry, joint)
            for k in range(self.game.num_players):
                tables[k][tuple(entry)] = values[k]
        mask = pop.mask.copy()
        mask[tuple(missing[:, i] for i in range(missing.shape[1]))] = True
        return replace(pop, tables=tuple(tables), mask=mask,
                       evaluations=pop.evaluations + len(missing))

    def _mixtures(self, pop: Population, dist: MetaDistribution):
        return [
            [(pol, w) for pol, w in zip(pop.strategies[k], dist.per_player[k])]
            for k in range(self.game.num_players)
        ]

    def propose(self, pop: Population, meta_game: NormalFormGame,
                dist: MetaDistribution) -> oracles.OracleOutput:
        mixtures = self._mixtures(pop, dist)
        proposals, converged = [], []
        if self.config.oracle.kind == "br":
            for k in range(self.game.num_players):
                opponents = {l: mixtures[l]
                             for l in range(self.game.num_players) if l != k}
                policy, value = kuhn_mod.best_response_to_mixture(
                    self.game, opponents, k)
                proposals.append((oracles.OracleProposal(strategy=policy,
                                                         score=value),))
                converged.append(self.contains(pop, k, policy))
            return oracles.OracleOutput(proposals=tuple(proposals),
                                        converged=tuple(converged))
        if self.config.oracle.kind == "rectified_br":
            if self.game.num_players != 2:
                raise UnsupportedConfigurationError(
                    "rectified_br handles two players only")
            diag = {}
            for k in range(2):
                opp = 1 - k
                own_payoffs = pop.tables[k] if k == 0 else pop.tables[k].T
                targets, skipped = oracles.rectified_opponent_sets(
                    own_payoffs, dist.per_player[k], dist.per_player[opp],
                    self.config.oracle.beats_tolerance)
                props = []
                for _, beaten, w in targets:
                    mixture = [(pop.strategies[opp][j], wj)
                               for j, wj in zip(beaten, w)]
                    policy, value = kuhn_mod.best_response_to_mixture(
                        self.game, {opp: mixture}, k)
                    if not any(kuhn_mod.policy_equal(policy, p.strategy)
                               for p in props):
                        props.append(oracles.OracleProposal(strategy=policy,
                                                            score=value))
                proposals.append(tuple(props))
                converged.append(all(self.contains(pop, k, p.strategy)
                                     for p in props))
                diag[k] = {"skipped": skipped}
            return oracles.OracleOutput(proposals=tuple(proposals),
                                        converged=tuple(converged),
                                        diagnostics={"rectified": diag})
        raise UnsupportedConfigurationError(
            f"oracle {self.config.oracle.kind!r} is not available for poker")

    def contains(self, pop: Population, player: int, policy: BehavioralPolicy) -> bool:
        return any(kuhn_mod.policy_equal(policy, p)
                   for p in pop.strategies[player])

    def describe(self, policy: BehavioralPolicy) -> str:
        bets = sorted(k for k, v in policy.table.items() if v[1] > 0.5)
        return "bet@" + ",".join(bets) if bets else "always-pass"

    def compute_metrics(self, pop: Population, meta_game: NormalFormGame,
                        dist: MetaDistribution) -> dict:
        out = {}
        for name in self.config.metrics:
            if name == "nashconv":
                out[name] = metrics_mod.nashconv_kuhn(self.game, pop.strategies,
                                                      dist)
            elif name == "diversity":
                counts = metrics_mod.diversity(pop.strategies)
                for k, c in enumerate(counts):
                    out[f"diversity_{k}"] = c
            else:
                raise InvalidInputError(f"unknown metric {name!r} for poker runs")
        return out


def make_context(game, config: PsroConfig, full_graph=None):
    if isinstance(game, NormalFormGame):
        return NfgPsroContext(game, config, full_graph)
    if isinstance(game, KuhnPoker):
        return KuhnPsroContext(game, config)
    raise InvalidInputError(f"unsupported game type: {type(game)!r}")


def step(ctx, pop: Population):
    """One solve / expand pass on a completed population.

    Returns (new population, meta distribution, oracle output, additions).
    """
    meta_game = pop.meta_game()
    dist = meta_solvers.solve(meta_game, ctx.config.meta_solver, ctx.config.mode)
    output = ctx.propose(pop, meta_game, dist)
    additions = []
    for k, props in enumerate(output.proposals):
        new_here = []
        for prop in props:
            if not ctx.contains(pop, k, prop.strategy) and not any(
                    _same_strategy(ctx, prop.strategy, s) for s in new_here):
                new_here.append(prop.strategy)
        additions.append(new_here)
    new_pop = pop.extend(additions) if any(additions) else pop
    return new_pop, dist, output, additions


def _same_strategy(ctx, a, b) -> bool:
    if isinstance(ctx, KuhnPsroContext):
        return kuhn_mod.policy_equal(a, b)
    return a == b


def run(game, config: PsroConfig, full_graph=None):
    """Full PSRO run; returns (trace, final population).

    Record i describes the population after i expansions: its meta
    distribution, metrics, and the strategies the oracle then added.
    """
    ctx = make_context(game, config, full_graph)
    pop = ctx.complete(ctx.initialize())
    trace = PsroTrace()
    start = time.perf_counter()
    for iteration in range(config.max_iterations + 1):
        meta_game = pop.meta_game()
        if iteration == config.max_iterations:
            # Budget exhausted: close the trace without expanding.
            dist = meta_solvers.solve(meta_game, config.meta_solver, config.mode) \
                if config.max_iterations > 0 else None
            metric_values = ctx.compute_metrics(pop, meta_game, dist) \
                if dist is not None else {}
            trace.records.append(IterationRecord(
                iteration=iteration,
                pop_sizes=pop.pop_sizes,
                total_pool_length=pop.total_pool_length,
                meta_marginals=tuple(tuple(map(float, v)) for v in dist.per_player)
                if dist is not None else (),
                added=tuple(() for _ in range(ctx.num_populations)),
                converged=False,
                metrics=metric_values,
                wall_clock=time.perf_counter() - start,
            ))
            break
        new_pop, dist, output, additions = step(ctx, pop)
        converged = all(len(a) == 0 for a in additions)
        trace.records.append(IterationRecord(
            iteration=iteration,
            pop_sizes=pop.pop_sizes,
            total_pool_length=pop.total_pool_length,
            meta_marginals=tuple(tuple(map(float, v)) for v in dist.per_player),
            added=tuple(tuple(ctx.describe(s) for s in a) for a in additions),
            converged=converged,
            metrics=ctx.compute_metrics(pop, pop.meta_game(), dist),
            wall_clock=time.perf_counter() - start,
        ))
        if converged:
            break
        pop = ctx.complete(new_pop)
    return trace, pop
