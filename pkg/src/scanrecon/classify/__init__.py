"""Severity classification from CVSS base metrics."""
from .dataset import CATEGORICAL, FEATURES, NUMERIC, Dataset, DatasetError, assemble_dataset
from .evaluate import EvalReport, FoldReport, cross_validate, stratified_folds
from .metrics import (
    MacroMetrics,
    binary_auc,
    confusion_matrix,
    macro_metrics,
    roc_auc_ovr,
    roc_curve,
    roc_points_csv,
)
from .models import (
    Algorithm,
    DecisionTree,
    GaussianNB,
    KNearest,
    ModelError,
    RandomForest,
    TrainerParams,
    predict,
    train,
)
