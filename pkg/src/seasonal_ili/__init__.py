"""Seasonal selection of web-search queries for ILI nowcasting."""

from .errors import (
    ConvergenceWarning,
    DataError,
    DegenerateTarget,
    InsufficientData,
    InsufficientHistory,
    NumericalError,
    RankDeficient,
    SeasonalIliError,
    SpanMismatch,
    ZeroVariance,
)
from .timeseries import QueryPanel, WeekRange, WeeklySeries, normalize_columns, pearson, rmse, slice_series
from .seasonal import (
    ModelKind,
    SeasonalDecomposition,
    SerflingFit,
    YearlyAverageFit,
    decompose,
    fit_serfling,
    fit_yearly_average,
    predict_serfling,
    predict_yearly_average,
)
from .ranking import Ranking, RankingMethod, RelevanceCurve, given_order, rank_by_method, rank_queries, relevance_curve
from .estimators import (
    DesignMatrix,
    EstimatorSpec,
    FeatureSpec,
    FittedModel,
    LassoConfig,
    build_design,
    fit_lasso,
    predict,
    select_lambda_cv,
)

__version__ = "0.1.0"
