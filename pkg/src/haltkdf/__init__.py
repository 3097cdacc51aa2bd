"""Randomized halting-predicate key stretching and its security analysis.

The package has three layers:

* the derivation engine (`kdf`, `outcomes`): iterated hashing with
  per-account halting predicates, account records, verification;
* selection design (`mechanism`, `optimizer`): privacy-constrained
  stopping-time distributions, softmax and LP-optimal, cost fitting;
* adversary analysis (`adversary`, `simulate`): exact success rates of
  the optimal offline guesser and a Monte Carlo validation harness.
"""

__version__ = "0.1.0"

from .adversary import (
    AdversaryStrategy,
    AttackContext,
    enumerate_vertices,
    feasible_region,
    gain,
    max_budget_bound,
    p_adv,
    p_det,
    strategy_payoff,
)
from .kdf import (
    ClientRecord,
    KdfParams,
    ServerRecord,
    create_account,
    digest_chain,
    hash_round,
    load_client_record,
    load_server_record,
    register_hash,
    reproduce,
    resolve_hash,
    save_client_record,
    save_server_record,
    verify,
)
from .mechanism import (
    BudgetTooSmallError,
    MechanismParams,
    StoppingDistribution,
    distribution_from_json,
    distribution_to_json,
    exponential_distribution,
    fit_k,
    info_leak_bits,
    privacy_ratio,
    sample_outcome,
    sample_stopping_time,
    validate,
)
from .optimizer import (
    CurvePoint,
    LinearProgram,
    LpResult,
    LpStatus,
    NoFeasibleKError,
    OptimalDesign,
    build_design_lp,
    gain_curve,
    optimal_mechanism,
    solve_lp,
    stationary_onset,
    write_curve_csv,
)
from .outcomes import (
    DigestChain,
    EnumerationGuardError,
    Outcome,
    OutcomeSpace,
    Predicate,
    build_outcome_space,
    classify_outcomes,
    predicate_eval,
    stopping_time,
)
from .simulate import (
    CellResult,
    MatrixCell,
    SimConfig,
    SimResult,
    estimate_p_adv,
    halt_rate_check,
    run_matrix,
    run_strategy,
    standard_matrix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
