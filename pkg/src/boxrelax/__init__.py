"""Box-relaxation decoding of binary signals and its asymptotic error laws.

Decode a +-1 vector from noisy Gaussian linear measurements by box-constrained
least squares plus sign rounding, compute the closed-form predictions for the
error-bit count (Poisson rate, phase transition, Gumbel window, leave-one-out
curvature), and verify them with seeded Monte Carlo campaigns.
"""

from .decoder import (
    DecoderSolution,
    ProblemInstance,
    count_errors,
    dual_vector,
    instance_from_json,
    instance_to_json,
    load_instance,
    save_instance,
    sign_round,
    solve_box_ls,
)
from .gaussian import (
    mills_ratio,
    std_normal_cdf,
    std_normal_pdf,
    truncated_sq_moment,
)
from .montecarlo import (
    CampaignResult,
    ExperimentConfig,
    TrialRecord,
    config_from_json,
    empirical_a_p,
    g_curve,
    generate_instance,
    leave_one_out_dual,
    run_campaign,
    surrogate_x,
    trial_seed,
    trials_to_csv,
)
from .stats import (
    EmpiricalSummary,
    binomial_reference_pmf,
    empirical_pmf,
    pairwise_error_correlation,
    success_probability,
    summarize_trials,
    tv_distance_to_poisson,
    wilson_interval,
)
from .theory import (
    SystemParams,
    TheoryPrediction,
    alpha_p_of_x,
    ao_scalar_loss,
    gumbel_p_correct,
    poisson_pmf,
    potential_f,
    predict,
    sigma2_for_alpha,
    solve_delta_for_lambda,
    solve_tau,
    stationarity_h,
    tau_bracket,
)

__version__ = "0.1.0"
