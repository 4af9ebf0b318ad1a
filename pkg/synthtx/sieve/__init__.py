from synthtx.sieve.basis import (
    AdditiveBasis,
    BSplineBasis,
    SieveBasis,
    block_offsets,
    build_block_design,
    eval_basis,
)
from synthtx.sieve.regression import (
    SieveRegressionModel,
    eval_regression,
    fit_sieve_regression,
)
from synthtx.sieve.weights import (
    SieveWeightModel,
    eval_weights,
    fit_sieve_weights,
    sieve_quadratic,
)
