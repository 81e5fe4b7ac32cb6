"""Mean-conditioned moment multicalibration: trainers, auditors and prediction intervals."""
from .core import (MEAN, CellKey, FeatureVector, FiniteDistribution, LabeledExample, LookupPredictor,
                   PredictorBundle, Sample, SetDescriptor, UpdateRecord, bucket_index, cell_membership,
                   evaluate_bundle, mixture_moment, project_unit, true_mean_and_moments)
from .predicates import GroupFamily

__version__ = "0.1.0"

__all__ = ["MEAN", "CellKey", "FeatureVector", "FiniteDistribution", "GroupFamily", "LabeledExample",
           "LookupPredictor", "PredictorBundle", "Sample", "SetDescriptor", "UpdateRecord", "bucket_index",
           "cell_membership", "evaluate_bundle", "mixture_moment", "project_unit", "true_mean_and_moments"]
