from synthtx.simulation.dgp import (
    DgpParams,
    OracleRegression,
    SimulatedStudy,
    StudySizes,
    draw_params,
    generate_study,
    sample_truncated_normal,
)
from synthtx.simulation.harness import MonteCarloResult, monte_carlo, summarize
from synthtx.simulation.metrics import MreSummary, coverage, mre, mre_summary, mse
from synthtx.simulation.replicate import ReplicateRecord, replicate_rng, run_replicate
from synthtx.simulation.server import ReplicateServer
