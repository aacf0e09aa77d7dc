"""Posterior maximization learning for classification under label noise.

Train a network so that a transformed readout of its outputs estimates
the class posterior, by maximizing a variational objective built from a
convex generator and its Fenchel conjugate.  The package covers the
chain end to end: generator/conjugate pairs with grid oracles, label
noise models, the training objective with its noise corrections, MAP
prediction with posterior correction, theorem-level verification
drivers, and a small CLI for reproducible experiments.
"""

from postmax.analysis import (
    ConvergenceRecord,
    PointwiseSolution,
    TheoremReport,
    check_argmax_invariance,
    check_binary_identity,
    check_correction_exactness,
    check_first_order_bias,
    check_multiclass_identity,
    check_pointwise_optimum,
    check_posterior_gap_bound,
    load_reports,
    make_convergence_record,
    rates_from_transition,
    save_reports,
    solve_optimal_T_discrete,
    taylor_bias_bound,
    training_bias_expression,
    verify_theorems,
)
from postmax.cli import (
    ExperimentConfig,
    ResultRecord,
    describe_noise,
    load_config,
    load_csv,
    main,
    make_synthetic,
    parse_config,
    parse_report,
    report,
    run_experiment,
    split_dataset,
    summarize,
)
from postmax.divergence import (
    DIVERGENCE_IDS,
    DivergenceSpec,
    brute_force_conjugate,
    conj_prime,
    conj_second,
    eval_generator,
    fenchel_conjugate,
    get_divergence,
    optimal_T_from_posterior,
    posterior_from_T,
)
from postmax.model import (
    MlpSpec,
    NetworkModel,
    TrainConfig,
    TrainTrace,
    evaluate,
    forward,
    init,
    load_model,
    objective_and_gradients,
    save_model,
    train,
)
from postmax.noise import (
    LabeledDataset,
    NoiseParams,
    TransitionMatrix,
    corrupt,
    empirical_transition,
    fixture_matrix,
    load_matrix_csv,
    save_matrix_csv,
    symmetric_matrix,
    uniform_offdiag_matrix,
)
from postmax.objective import (
    POSTERIOR_FLOOR,
    DiscreteJoint,
    ObjectiveConfig,
    active_passive_split,
    bias_binary,
    bias_multiclass,
    bias_simplex_batch,
    bias_simplex_grad_batch,
    corrected_grad_batch,
    corrected_grad_sample,
    corrected_jf_batch,
    cross_entropy,
    cross_entropy_logit_grad,
    exact_bias,
    exact_jf,
    exact_jf_noisy,
    generator_curvature,
    jf_batch,
    jf_grad_batch,
    jf_grad_sample,
    jf_simplex_batch,
    jf_simplex_gan,
    jf_simplex_grad_D,
    jf_simplex_grad_batch,
    jf_simplex_kl,
    jf_simplex_kl_logit_grad,
    jf_simplex_logit_grad_batch,
    jf_simplex_sl,
    noisy_joint,
)
from postmax.posterior import (
    PosteriorMatrix,
    accuracy,
    estimate_posterior,
    is_noise_tolerant_regime,
    noisy_posterior_forward,
    posterior_correct,
    predict,
    save_posterior_csv,
)

__version__ = "0.1.0"

__all__ = [
    "DIVERGENCE_IDS",
    "POSTERIOR_FLOOR",
    "ConvergenceRecord",
    "DiscreteJoint",
    "DivergenceSpec",
    "ExperimentConfig",
    "LabeledDataset",
    "MlpSpec",
    "NetworkModel",
    "NoiseParams",
    "ObjectiveConfig",
    "PointwiseSolution",
    "PosteriorMatrix",
    "ResultRecord",
    "TheoremReport",
    "TrainConfig",
    "TrainTrace",
    "TransitionMatrix",
    "accuracy",
    "active_passive_split",
    "bias_binary",
    "bias_multiclass",
    "bias_simplex_batch",
    "bias_simplex_grad_batch",
    "brute_force_conjugate",
    "check_argmax_invariance",
    "check_binary_identity",
    "check_correction_exactness",
    "check_first_order_bias",
    "check_multiclass_identity",
    "check_pointwise_optimum",
    "check_posterior_gap_bound",
    "conj_prime",
    "conj_second",
    "corrected_grad_batch",
    "corrected_grad_sample",
    "corrected_jf_batch",
    "corrupt",
    "cross_entropy",
    "cross_entropy_logit_grad",
    "describe_noise",
    "empirical_transition",
    "estimate_posterior",
    "eval_generator",
    "evaluate",
    "exact_bias",
    "exact_jf",
    "exact_jf_noisy",
    "fenchel_conjugate",
    "fixture_matrix",
    "forward",
    "generator_curvature",
    "get_divergence",
    "init",
    "is_noise_tolerant_regime",
    "jf_batch",
    "jf_grad_batch",
    "jf_grad_sample",
    "jf_simplex_batch",
    "jf_simplex_gan",
    "jf_simplex_grad_D",
    "jf_simplex_grad_batch",
    "jf_simplex_kl",
    "jf_simplex_kl_logit_grad",
    "jf_simplex_logit_grad_batch",
    "jf_simplex_sl",
    "load_config",
    "load_csv",
    "load_matrix_csv",
    "load_model",
    "load_reports",
    "main",
    "make_convergence_record",
    "make_synthetic",
    "noisy_joint",
    "noisy_posterior_forward",
    "objective_and_gradients",
    "optimal_T_from_posterior",
    "parse_config",
    "parse_report",
    "posterior_correct",
    "posterior_from_T",
    "predict",
    "rates_from_transition",
    "report",
    "run_experiment",
    "save_matrix_csv",
    "save_model",
    "save_posterior_csv",
    "save_reports",
    "solve_optimal_T_discrete",
    "split_dataset",
    "summarize",
    "symmetric_matrix",
    "taylor_bias_bound",
    "train",
    "training_bias_expression",
    "uniform_offdiag_matrix",
    "verify_theorems",
]
