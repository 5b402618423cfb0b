"""linatt: softmax vs. reassociated linear self-attention, measured exactly.

Two evaluations of the same attention product are implemented side by side:
the pairwise order with its N x N map, and the reassociated channels-first
order whose map is a small (C/r) x C matrix. The library proves their
agreement, checks hand-derived gradients against finite differences,
interprets the reassociated variant as per-channel weighting, and measures
the quadratic-to-linear reduction in wall time and exact float allocation.
"""

from .matrixlib import (
    AllocationLedger,
    ContractViolation,
    Matrix,
    Rng,
    add,
    frobenius_dot,
    matmul,
    matmul_nt,
    matmul_tn,
    row_softmax,
    row_softmax_of_product,
    scale,
    transpose,
    use_ledger,
)
from .projections import (
    FeatureMap,
    ProjectionSet,
    embed,
    init_projections,
    random_feature_map,
    rank_one_projections,
)
from .attention import (
    LINEAR,
    QUADRATIC,
    VANILLA,
    AttentionArtifacts,
    ChannelWeightReport,
    channel_weight_report,
    channel_weights_closed_form,
    elementwise_oracle_linear,
    elementwise_oracle_quadratic,
    linear_sa_forward_linear,
    linear_sa_forward_quadratic,
    residual_combine,
    vanilla_sa_forward,
)
from .channel_attention import (
    CAWeights,
    ca_forward,
    compare_channel_mechanisms,
    global_average_pool,
    init_ca_weights,
)
from .gradients import (
    CAGradientBundle,
    GradientBundle,
    backward_ca,
    backward_linear,
    backward_linear_quadratic_order,
    backward_vanilla,
    finite_difference_oracle,
)
from .bench import (
    BenchConfig,
    BenchRecord,
    ScalingFit,
    feasibility_frontier,
    find_crossover,
    fit_scaling,
    largest_feasible_n,
    peak_float_terms,
    predict_peak_floats,
    run_sweep,
)

__version__ = "0.1.0"
