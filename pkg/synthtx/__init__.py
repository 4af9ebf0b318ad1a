from synthtx.cmmd import (
    CmmdBatch,
    CmmdComponents,
    PointwiseWeights,
    cmmd_batch,
    cmmd_components,
    cmmd_value,
    pointwise_weights,
)
from synthtx.config import RunConfig
from synthtx.dataset import Dataset, load_dataset
from synthtx.estimator import (
    EstimateReport,
    Method,
    ate,
    pool_baseline,
    synthetic_theta,
    uniform_baseline,
)
from synthtx.inference import (
    adjustment_components,
    per_observation_score,
    sieve_scores,
    variance_and_ci,
)
from synthtx.kernel import (
    CmeModel,
    KernelConfig,
    cross_outcome_gram,
    embedding_coefficients,
    fit_cme,
    gaussian_kernel,
    median_heuristic,
)
from synthtx.qp import QpProblem, solve_general_qp, solve_simplex_qp
from synthtx.study import FittedStudy, WeightCurves
