import sys
import logging
from dataclasses import dataclass, field
from typing import Final

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

import numpy as np
from numpy.typing import NDArray

from synthtx.cmmd import CmmdBatch, cmmd_batch, pointwise_weight_rows, reported_cmmd
from synthtx.config import RunConfig
from synthtx.dataset import CONTROL, TARGET, Dataset
from synthtx.errors import ConfigError, InferenceError
from synthtx.estimator import (
    ConfidenceInterval,
    EstimateReport,
    Method,
    PointwiseWeightTable,
    UniformWeights,
    WeightModel,
    ate,
    synthetic_theta,
)
from synthtx.inference import ScoreState, adjustment_components, sieve_scores, variance_and_ci
from synthtx.interval import Interval
from synthtx.kernel import BandwidthRule, CmeModel, KernelConfig, OutcomeGramCache, fit_cme
from synthtx.sieve import (
    AdditiveBasis,
    BSplineBasis,
    SieveBasis,
    SieveRegressionModel,
    SieveWeightModel,
    fit_sieve_regression,
    fit_sieve_weights,
)

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class WeightCurves:
    """
    Description
    -----------
    Weight curves and CMMD values per method on an even covariate grid.

    """

    xs: NDArray[np.float64]
    weights: dict[str, NDArray[np.float64]]
    cmmd: dict[str, NDArray[np.float64]]
    clamped: int = 0


@dataclass(slots=True)
class FittedStudy:
    dataset: Dataset
    config: RunConfig
    kernel: KernelConfig
    target: CmeModel
    sources: tuple[CmeModel, ...]
    cache: OutcomeGramCache
    batch: CmmdBatch
    regression_basis: SieveBasis
    regressions: tuple[SieveRegressionModel, ...]
    pool: SieveRegressionModel
    weight_bases: tuple[BSplineBasis, ...] | None
    _sieve: SieveWeightModel | None = field(default=None, repr=False)

    @classmethod
    def new(cls, dataset: Dataset, config: RunConfig) -> Self:
        """
        Description
        -----------
        Fit everything the estimators share: one CME per population on control
        rows, one sieve regression per source on treated rows, the pooled
        regression and the CMMD components at every target covariate.

        """
        dataset.validate_for_estimation()
        n_sources: Final = dataset.n_sources
        kernel = resolve_kernel(dataset, config)

        target = fit_cme(TARGET, *dataset.control_data(TARGET), kernel)
        sources = tuple(
            fit_cme(i, *dataset.control_data(i), kernel) for i in range(1, n_sources + 1)
        )
        cache = OutcomeGramCache()
        batch = cmmd_batch(sources, target, dataset.target_x(), cache)

        settings = config.sieve
        if dataset.dim == 1:
            regression_basis = BSplineBasis.from_sample(
                dataset.x, settings.regression_order, settings.regression_knots
            )
            weight_basis = BSplineBasis.from_sample(
                dataset.x, settings.weight_order, settings.weight_knots
            )
            weight_bases = tuple(weight_basis for _ in range(n_sources))
        else:
            regression_basis = AdditiveBasis.from_sample(
                dataset.x, settings.regression_order, settings.regression_knots
            )
            weight_bases = None

        regressions = tuple(
            fit_sieve_regression(*dataset.treated_data(i), regression_basis, i)
            for i in range(1, n_sources + 1)
        )
        pool = fit_sieve_regression(*dataset.pooled_treated(), regression_basis, 0)

        logger.info(
            "Fitted study: %d sources, %d target rows, %d observations.",
            n_sources,
            dataset.n_target,
            len(dataset),
        )
        return cls(
            dataset,
            config,
            kernel,
            target,
            sources,
            cache,
            batch,
            regression_basis,
            regressions,
            pool,
            weight_bases,
        )

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def sieve_weights(self) -> SieveWeightModel:
        if self.weight_bases is None:
            raise ConfigError(
                "Sieve weights need a scalar covariate; use a pointwise method instead."
            )

        if self._sieve is None:
            settings = self.config.sieve
            self._sieve = fit_sieve_weights(
                self.sources,
                self.target,
                self.batch.xs,
                self.weight_bases,
                constrained=settings.constrained,
                pointwise_simplex=settings.pointwise_simplex,
                ridge=settings.ridge,
                batch=self.batch,
            )

        return self._sieve

    def pointwise_table(self, constrained: bool) -> PointwiseWeightTable:
        rows = pointwise_weight_rows(self.batch, constrained)
        return PointwiseWeightTable(self.batch.xs, rows, constrained)

    def estimate(self, method: Method, alpha: float | None = None) -> EstimateReport:
        alpha = self.config.alpha if alpha is None else alpha
        target_x: Final = self.batch.xs
        diagnostics: dict[str, object] = {**self.kernel.as_dict(), **self.dataset.counts()}
        diagnostics["regression_basis"] = self.regression_basis.as_dict()
        diagnostics["clamped_target"] = self.regression_basis.count_outside(target_x)
        ridge = self.config.sieve.ridge
        diagnostics["ridge"] = "trace-scaled" if ridge is None else ridge

        sieve = None
        pooled = False
        regressions: tuple[SieveRegressionModel, ...] = self.regressions
        match method:
            case Method.SIEVE:
                sieve = self.sieve_weights()
                weights: WeightModel = sieve
                diagnostics["weight_bases"] = [b.as_dict() for b in sieve.bases]
                diagnostics["average_cmmd_fit"] = sieve.average_cmmd
            case Method.POINT_CONSTRAINED:
                weights = self.pointwise_table(True)
            case Method.POINT_UNCONSTRAINED:
                weights = self.pointwise_table(False)
            case Method.UNIFORM:
                weights = UniformWeights(self.n_sources)
            case Method.POOL:
                weights = UniformWeights(1)
                regressions = (self.pool,)
                pooled = True

        theta = synthetic_theta(weights, regressions, target_x)
        ate_hat = ate(theta, self.dataset.group(TARGET, CONTROL)[1])

        if not pooled:
            d_hat = np.maximum(self.batch.values(weights.weights_at(target_x)), 0.0)
            diagnostics["mean_cmmd"] = float(np.mean(d_hat))

        variance: float | None = None
        ci: ConfidenceInterval | None = None
        if method.has_inference:
            try:
                variance, ci = self._inference(theta, weights, regressions, alpha, sieve, pooled)
                diagnostics["inference"] = "sample-analog scores; CME estimation error not included"
            except InferenceError as exc:
                logger.warning("No variance for %s: %s", method.value, exc)
                diagnostics["inference"] = f"unavailable: {exc}"
        else:
            diagnostics["inference"] = "unavailable: no variance theory for pointwise weights"

        logger.info("%s estimate %.6g", method.value, theta)
        return EstimateReport(method, theta, ate_hat, variance, ci, len(self.dataset), diagnostics)

    def _inference(
        self,
        theta: float,
        weights: WeightModel,
        regressions: tuple[SieveRegressionModel, ...],
        alpha: float,
        sieve: SieveWeightModel | None,
        pooled: bool,
    ) -> tuple[float, ConfidenceInterval]:
        dataset = self.dataset
        if pooled:
            treated_x = [dataset.pooled_treated()[0]]
        else:
            treated_x = [dataset.treated_data(i)[0] for i in range(1, self.n_sources + 1)]

        components = adjustment_components(
            regressions, treated_x, weights, sieve, self.batch if sieve else None
        )
        state = ScoreState(
            theta_hat=theta,
            weights=weights,
            regressions=regressions,
            components=components,
            n_total=len(dataset),
            n_target=dataset.n_target,
            n_treated=tuple(len(x) for x in treated_x),
            n_sources=self.n_sources,
            sieve=sieve,
            pooled=pooled,
        )
        return variance_and_ci(sieve_scores(dataset, state, self.batch), alpha)

    def curves(self, grid: Interval | None = None, steps: int = 101) -> WeightCurves:
        """
        Description
        -----------
        Sieve, pointwise and uniform weights with their CMMD values on `steps` even
        points of `grid`, by default the weight basis domain.

        """
        sieve = self.sieve_weights()
        domain = sieve.bases[0].domain if grid is None else grid
        xs = domain.linspace(steps)

        batch = cmmd_batch(self.sources, self.target, xs, self.cache)
        constrained = self.config.sieve.constrained
        weights = {
            "sieve": sieve.weights_at(xs),
            "point": pointwise_weight_rows(batch, constrained),
            "uniform": UniformWeights(self.n_sources).weights_at(xs),
        }
        cmmd = {name: reported_cmmd(batch.values(w)) for name, w in weights.items()}
        clamped = sieve.bases[0].count_outside(xs)
        if clamped:
            logger.warning("%d grid points clamped to the weight basis domain.", clamped)

        return WeightCurves(xs, weights, cmmd, clamped)


def resolve_kernel(dataset: Dataset, config: RunConfig) -> KernelConfig:
    """
    Description
    -----------
    Fixed bandwidths from the settings, or median-heuristic bandwidths over all
    covariates and all control outcomes.

    """
    settings = config.kernel
    if settings.rule is BandwidthRule.FIXED:
        return KernelConfig(settings.bandwidth_x, settings.bandwidth_y, settings.lam)

    controls = dataset.arm == CONTROL
    kernel = KernelConfig.from_data(dataset.x, dataset.y[controls], settings.lam)
    if settings.bandwidth_x is not None or settings.bandwidth_y is not None:
        kernel = KernelConfig(
            settings.bandwidth_x or kernel.bandwidth_x,
            settings.bandwidth_y or kernel.bandwidth_y,
            settings.lam,
            BandwidthRule.MEDIAN_HEURISTIC,
        )

    return kernel


