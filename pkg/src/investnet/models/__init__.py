"""From-scratch classifiers: RBF SVM (SMO), sigmoid MLP, random forest."""

from .forest import ForestModel, Importance, feature_importance, train_forest
from .mlp import MlpModel, train_mlp
from .scaling import Scaler, apply_scaler, fit_scaler
from .svm import SvmModel, grid_search_svm, rbf_kernel, train_svm

__all__ = [
    "ForestModel", "Importance", "MlpModel", "Scaler", "SvmModel", "apply_scaler", "feature_importance",
    "fit_scaler", "grid_search_svm", "rbf_kernel", "train_forest", "train_mlp", "train_svm",
]
