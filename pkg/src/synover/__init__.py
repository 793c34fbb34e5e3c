"""Synthetic minority oversampling (SMOTE, KDEO), plug-in and KNN classifiers,
balanced-risk evaluation and simulation experiments for imbalanced data."""

from .data import LabeledDataset, load_csv, partition_classes
from .rng import RngStream
from .oversampling import BandwidthSpec, OversamplerConfig, kdeo_sample, oversample_to_balance, scott_bandwidth, smote_sample
from .density import KdeModel, kde_fit
from .classifiers import fit_bbc, fit_knn, fit_ks_plugin, fit_logistic
from .evaluation import am_risk, cross_validate_K, cross_validate_bbc, concentration_audit

__version__ = "0.1.0"
