"""Policy-space response oracles over normal-form games and Kuhn poker,
with interchangeable meta-solvers (ranking, exact Nash, uniform, projected
replicator dynamics) and oracles (best response, preference-based variants,
rectified best response).
"""

from .driver import Population, PsroConfig, PsroTrace, run, step
from .errors import (
    InvalidInputError,
    NumericalFailureError,
    PsroError,
    UnsupportedConfigurationError,
    WalkthroughMismatchError,
)
from .games import (
    GameFlags,
    MixedProfile,
    NormalFormGame,
    expected_payoffs,
    fixture_game,
    game_flags,
    generate_cyclic,
    generate_random_game,
    generate_transitive,
    is_symmetric,
    is_win_loss,
    is_zero_sum,
    load_game,
    save_game,
)
from .kuhn import BehavioralPolicy, KuhnPoker
from .meta_solvers import MetaDistribution, MetaSolverConfig
from .oracles import OracleConfig, OracleOutput
from .response_graph import (
    MULTI_POP,
    SINGLE_POP,
    AlphaRankResult,
    MarkovChain,
    ResponseGraph,
    alpharank,
    build_response_graph,
    stationary_distribution,
    transition_matrix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
