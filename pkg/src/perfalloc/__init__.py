"""Predictive price-performance modeling and executor allocation toolkit.

Predicts how a query's runtime responds to allocated compute, trains a
feature-driven parameter model for those predictions, selects cost-optimal
allocations under configurable objectives, and simulates allocation
policies to quantify occupancy savings.
"""

from .allocsim import (
    ClusterModel,
    DynamicAllocation,
    RuleAllocation,
    SimResult,
    SimWork,
    Skyline,
    StaticAllocation,
    auc,
    compare_policies,
    simulate,
)
from .errors import (
    InfeasibleSelectionError,
    ModelFormatError,
    ModelVersionError,
    SchemaMismatchError,
    WorkloadError,
)
from .evaluation import CvPlan, EvalReport, ablation, cross_validate
from .features import (
    FeatureVector,
    QueryFeatures,
    WorkloadRecord,
    build_schema,
    load_workload,
    save_workload,
    vectorize,
)
from .forest import (
    RegressionForest,
    RegressionTree,
    TrainingExample,
    load_model,
    permutation_importance,
    predict,
    save_model,
    train,
)
from .ppm import (
    AllocationCurve,
    AmdahlPPM,
    FitResult,
    PowerLawPPM,
    PpmFamily,
    ResourceKind,
    SaturationPoint,
    evaluate_amdahl,
    evaluate_power_law,
    fit_amdahl,
    fit_power_law,
    rms_relative_error,
    saturation_point,
)
from .schedsim import QueryProfile, StageProfile, estimate_curve, estimate_runtime, synthetic_profile
from .selection import (
    ElbowResult,
    Factorization,
    NodeShape,
    SelectionObjective,
    error_metric,
    factorize_cores,
    select_elbow,
    select_limited_slowdown,
)
from .synth import generate_workload
from .training import DEFAULT_N_GRID, augment_training_data

__version__ = "0.1.0"
