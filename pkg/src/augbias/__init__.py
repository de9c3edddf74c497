"""Desk-scale study of bias-corrected training on augmented data.

The package provides: exactly-biased synthetic tasks, a corrected loss with a
closed form, five training schemes (original, augmented, two-stage drop,
mixed loss, and their generic combination), empirical estimators for the
optimization constants, and evaluators for every convergence bound the
schemes come with.
"""

from .core import (
    AUGMENTED,
    ORIGINAL,
    DegenerateEstimateError,
    LabeledSet,
    Rng,
    sample_beta,
    sample_dirichlet,
    softmax,
)
from .models import (
    GradSample,
    Mlp,
    Predictor,
    SoftmaxLinear,
    ce_grad,
    ce_loss,
    estimate_G,
    forward,
    init_predictor,
    p_of,
    zeros_predictor,
)
from .augment import (
    BiasEstimate,
    Contrast,
    MixupK,
    SyntheticInputShift,
    SyntheticLabelBias,
    SyntheticTask,
    contrast,
    estimate_delta_P,
    estimate_delta_y,
    gen_synthetic,
    make_sampler,
    mixup_k,
)
from .losses import (
    CorrectedLossResult,
    MixWeights,
    combined_grad,
    grad_a,
    loss_a,
    objective_value,
)
from .trainers import (
    AugDrop,
    Augmented,
    MixLoss,
    Original,
    TrainConfig,
    TrainTrace,
    TraceRow,
    WeMix,
    augdrop,
    mixloss,
    read_trace_csv,
    run_scheme,
    sgd_step,
    train_augmented,
    train_original,
    wemix,
    write_trace_csv,
)
from .theory import (
    BoundReport,
    CeObjective,
    ConstantEstimates,
    ConstraintCheck,
    ResolvedSchedule,
    best_found_floor,
    bias_radius,
    bound_report,
    estimate_constants,
    estimate_L_smooth,
    estimate_mu,
    in_constraint_set,
    shift_radius,
    theory_stepsizes,
)

__all__ = [name for name in dir() if not name.startswith("_")]
