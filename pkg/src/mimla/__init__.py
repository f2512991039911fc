"""Instance annotation for multi-instance multi-label data.

Bags of instances carry set-valued labels; under the union assumption the
bag label is exactly the set of its instances' hidden classes.  This
package trains an affine multinomial logit on such data with EM, using an
exact subset-sum dynamic program for the E-step posteriors, and evaluates
the result at both the instance and the bag level.
"""
from .backend import available as available_backends
from .bags import (Bag, Dataset, Finding, LabelSet, ValidationReport,
                   validate_dataset)
from .errors import (ContractViolation, DataError, MimlaError,
                     NumericFailure, ZeroLikelihoodError)
from .kernelize import (KernelDictionary, build_dictionary, kernel_features,
                        kernelize, rbf, select_delta)
from .metrics import (DummyBaseline, MetricReport, Predictions,
                      bag_confidence, dummy_baseline, dummy_baselines,
                      dummy_predictions, evaluate, kfold_split,
                      predict_bag, predict_dataset, predict_inductive,
                      predict_transductive, ranks_from_scores)
from .model import (Model, bag_prior, instance_prior, prior_matrix,
                    zero_weights)
from .posterior import (JointMatrix, PosteriorMatrix, SubsetTable,
                        SubstitutionMatrix, bag_log_likelihood,
                        forward_pass, joint_last, leave_one_out_solve,
                        posteriors_bruteforce, posteriors_fast,
                        posteriors_forward, substitution_matrix)
from .subsets import canonical_subset_order, subset_rank
from .synth import SynthSpec, generate
from .train import (TrainConfig, TrainTrace, em_train, em_train_stochastic,
                    fit_kernel, gem_step, miml_log_likelihood, prune_bags,
                    surrogate_gradient, surrogate_value, train_sisl)
from .cv import CVResult, cross_validate

__version__ = "0.1.0"

__all__ = [
    "Bag", "CVResult", "ContractViolation", "DataError", "Dataset",
    "DummyBaseline", "Finding", "JointMatrix", "KernelDictionary",
    "LabelSet", "MetricReport", "MimlaError", "Model", "NumericFailure",
    "PosteriorMatrix", "Predictions", "SubsetTable", "SubstitutionMatrix",
    "SynthSpec", "TrainConfig", "TrainTrace", "ValidationReport",
    "ZeroLikelihoodError", "available_backends", "bag_confidence",
    "bag_log_likelihood", "bag_prior", "build_dictionary",
    "canonical_subset_order", "cross_validate", "dummy_baseline",
    "dummy_baselines", "dummy_predictions", "em_train",
    "em_train_stochastic", "evaluate", "fit_kernel", "forward_pass",
    "generate", "gem_step", "instance_prior", "joint_last",
    "kernel_features", "kernelize", "kfold_split", "leave_one_out_solve",
    "miml_log_likelihood", "posteriors_bruteforce", "posteriors_fast",
    "posteriors_forward", "predict_bag", "predict_dataset",
    "predict_inductive", "predict_transductive", "prior_matrix",
    "prune_bags", "ranks_from_scores", "rbf", "select_delta",
    "subset_rank", "substitution_matrix", "surrogate_gradient",
    "surrogate_value", "train_sisl", "validate_dataset", "zero_weights",
]
