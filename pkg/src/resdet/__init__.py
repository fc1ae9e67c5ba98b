"""Resolution-adaptive signal detection.

Turn a posterior over signal locations (samples, inclusion probabilities, or
per-effect probability matrices) into a disjoint set of discovery regions
that maximizes resolution-weighted expected power under a Bayesian error-rate
budget (FDR, local FDR, PFER, or FWER).
"""

from .cliques import IntersectionGraph, build_intersection_graph, clique_constraints, edge_clique_cover
from .core import (
    CandidateGroup,
    DetectionSet,
    Discovery,
    ErrorRateSpec,
    LocationSpace,
    Region,
    WeightFn,
    make_group,
)
from .detect import (
    CertReport,
    DetectOptions,
    assemble_problem,
    certify,
    detect_fwer,
    detect_regions,
    maximize_f1,
)
from .errors import InternalError, ResdetError, UnsupportedOperation, ValidationError
from .groups import (
    contiguous_groups,
    dedupe,
    default_regression_groups,
    dissimilarity_from_corr,
    hierarchical_groups,
    lattice_regions,
)
from .lpsolve import (
    IntegerSolution,
    LpProblem,
    LpRow,
    LpSolution,
    randomized_rounding,
    solve_relaxed,
    solve_residual_integer,
)
from .pips import (
    PipTable,
    RegionLocator,
    SampleSet,
    SusieAlphas,
    apply_pips,
    count_interval_pips,
    merge_chains,
    pips_continuous,
    pips_from_samples,
    pips_from_susie,
)
from .preprocess import prefilter_groups, prefilter_locations, prenarrow
from .samplers import (
    GibbsResult,
    LssConfig,
    lss_gibbs,
    pss_gibbs,
    sample_truncated_normal,
    truncated_normal,
)
from .sim import (
    EvalResult,
    avg_jaccard,
    changepoint_design,
    evaluate,
    gen_ark_design,
    gen_sparse_glm,
)

__version__ = "0.1.0"
