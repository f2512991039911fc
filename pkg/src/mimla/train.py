"""Generalized EM training of the instance-annotation model.

Each iteration computes exact instance posteriors at the current weights
(E-step), then takes a single gradient-ascent step on the resulting
surrogate objective with Armijo backtracking (M-step).  One improving step
is enough for the generalized form of EM: the bag-level log likelihood is
non-decreasing across iterations, which the tests pin down.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bags import Dataset, validate_dataset
from .errors import ContractViolation, DataError
from .estep import EStepPlan
from .kernelize import (KernelDictionary, build_dictionary, kernelize,
                        select_delta)
from .model import Model, augment, softmax_rows, zero_weights


@dataclass
class TrainConfig:
    """Knobs for the EM loop; defaults follow the reference experiments."""

    em_iterations: int = 50
    l2: float = 0.0                 # strength of the (lambda/2)*||w||^2 penalty
    step_init: float = 1.0          # backtracking start step
    step_shrink: float = 0.5        # step multiplier per rejected candidate
    armijo_c: float = 1e-4          # sufficient-increase slope fraction
    max_backtracks: int = 50        # candidates per M-step before giving up
    sample_fraction: float = 1.0    # bag fraction per stochastic iteration
    prune_fraction: float = 0.0     # heaviest-bag fraction dropped up front
    seed: int = 0

    def __post_init__(self):
        if self.em_iterations < 1:
            raise ContractViolation("em_iterations must be at least 1")
        if self.l2 < 0:
            raise ContractViolation("l2 must be nonnegative")
        if not 0 < self.step_init:
            raise ContractViolation("step_init must be positive")
        if not 0 < self.step_shrink < 1:
            raise ContractViolation("step_shrink must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ContractViolation("armijo_c must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ContractViolation("max_backtracks must be at least 1")
        if not 0 < self.sample_fraction <= 1:
            raise ContractViolation("sample_fraction must lie in (0, 1]")
        if not 0 <= self.prune_fraction < 1:
            raise ContractViolation("prune_fraction must lie in [0, 1)")


@dataclass
class TrainTrace:
    """Per-iteration diagnostics.

    ``log_likelihood[t]`` is the full-data objective (bag log likelihood
    minus the L2 term) at the weights *entering* iteration t; stochastic
    runs fill it every tenth iteration and leave NaN elsewhere.
    ``final_log_likelihood`` is the same objective at the returned weights.
    """

    surrogate: list[float] = field(default_factory=list)
    log_likelihood: list[float] = field(default_factory=list)
    backtrack_steps: list[int] = field(default_factory=list)
    estep_seconds: list[float] = field(default_factory=list)
    iteration_seconds: list[float] = field(default_factory=list)
    final_log_likelihood: float = math.nan


def _logsumexp_rows(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=1)
    return m + np.log(np.exp(scores - m[:, None]).sum(axis=1))


def _penalty(weights: np.ndarray, l2: float) -> float:
    return 0.5 * l2 * float((weights * weights).sum())


def _surrogate(weights, posteriors, xaug, l2) -> float:
    scores = xaug @ weights
    return float((posteriors * scores).sum() - _logsumexp_rows(scores).sum()) \
        - _penalty(weights, l2)


def _gradient(weights, posteriors, priors, xaug, l2) -> np.ndarray:
    return xaug.T @ (posteriors - priors) - l2 * weights


def surrogate_value(weights, posteriors, ds: Dataset, l2: float = 0.0) -> float:
    """The expected complete-data objective (additive constants dropped).

    ``posteriors`` holds one row per instance, stacked in bag order.
    """
    return _surrogate(weights, posteriors, augment(ds.stacked_features()), l2)


def surrogate_gradient(weights, posteriors, ds: Dataset,
                       l2: float = 0.0) -> np.ndarray:
    """Gradient of :func:`surrogate_value` in the weights."""
    xaug = augment(ds.stacked_features())
    priors = softmax_rows(xaug @ weights)
    return _gradient(weights, posteriors, priors, xaug, l2)


def line_search_ascent(value_fn, weights, f0, grad, cfg: TrainConfig):
    """Backtracking ascent along ``grad`` from ``weights``.

    Accepts the first candidate satisfying the Armijo sufficient-increase
    condition; returns ``(new_weights, new_value, evaluations, accepted)``.
    With no acceptable candidate the input point comes back unchanged, so a
    caller's objective can never decrease.
    """
    slope = float((grad * grad).sum())
    if slope == 0.0:
        return weights, f0, 0, True
    step = cfg.step_init
    for evals in range(1, cfg.max_backtracks + 1):
        candidate = weights + step * grad
        value = value_fn(candidate)
        if value >= f0 + cfg.armijo_c * step * slope:
            return candidate, value, evals, True
        step *= cfg.step_shrink
    return weights, f0, cfg.max_backtracks, False


def gem_step(weights, posteriors, ds: Dataset, cfg: TrainConfig):
    """One M-step on a dataset: returns ``(new_weights, evaluations)``."""
    xaug = augment(ds.stacked_features())
    new_w, _, evals, _ = _gem_step_local(weights, posteriors, xaug, cfg)
    return new_w, evals


def _gem_step_local(weights, posteriors, xaug, cfg):
    priors = softmax_rows(xaug @ weights)
    grad = _gradient(weights, posteriors, priors, xaug, cfg.l2)
    f0 = _surrogate(weights, posteriors, xaug, cfg.l2)
    return line_search_ascent(
        lambda w: _surrogate(w, posteriors, xaug, cfg.l2),
        weights, f0, grad, cfg)


def miml_log_likelihood(weights, ds: Dataset, l2: float = 0.0) -> float:
    """Sum of per-bag label-set log likelihoods, minus the L2 penalty."""
    plan = EStepPlan(ds)
    result = plan.run(np.asarray(weights, dtype=np.float64))
    return float(result.logliks.sum()) - _penalty(np.asarray(weights), l2)


def _require_valid(ds: Dataset):
    report = validate_dataset(ds)
    if report.fatal:
        raise DataError("dataset failed validation:\n" +
                        "\n".join(str(f) for f in report.fatals()))


def _fit(ds: Dataset, cfg: TrainConfig, stochastic: bool):
    _require_valid(ds)
    if cfg.prune_fraction > 0.0:
        ds = prune_bags(ds, cfg.prune_fraction)
    plan = EStepPlan(ds)
    rng = np.random.default_rng(cfg.seed)
    weights = zero_weights(plan.xaug.shape[1] - 1, ds.num_classes)
    trace = TrainTrace()
    sample_all = not stochastic or cfg.sample_fraction >= 1.0
    sample_size = len(ds) if sample_all else \
        math.ceil(cfg.sample_fraction * len(ds))

    for iteration in range(cfg.em_iterations):
        t0 = time.perf_counter()
        if sample_all:
            active = plan
        else:
            chosen = np.sort(rng.choice(len(ds), size=sample_size,
                                        replace=False))
            active = plan.subset(chosen)
        result = active.run(weights)
        if sample_all:
            objective = float(result.logliks.sum()) - _penalty(weights, cfg.l2)
        elif iteration % 10 == 0:
            # Full-data checkpoint: diagnostic only, not part of the update.
            objective = float(plan.run(weights).logliks.sum()) \
                - _penalty(weights, cfg.l2)
        else:
            objective = math.nan
        grad = _gradient(weights, result.posteriors, result.priors,
                         active.xaug, cfg.l2)
        f0 = _surrogate(weights, result.posteriors, active.xaug, cfg.l2)
        weights, f1, evals, _ = line_search_ascent(
            lambda w: _surrogate(w, result.posteriors, active.xaug, cfg.l2),
            weights, f0, grad, cfg)
        trace.surrogate.append(f1)
        trace.log_likelihood.append(objective)
        trace.backtrack_steps.append(evals)
        trace.estep_seconds.append(result.seconds)
        trace.iteration_seconds.append(time.perf_counter() - t0)

    trace.final_log_likelihood = \
        float(plan.run(weights).logliks.sum()) - _penalty(weights, cfg.l2)
    model = Model(weights, ds.num_classes, ds.feature_dim,
                  mode="linear", config=asdict(cfg))
    return model, trace


def em_train(ds: Dataset, cfg: TrainConfig | None = None):
    """Full-batch EM from zero weights; returns ``(Model, TrainTrace)``."""
    return _fit(ds, cfg or TrainConfig(), stochastic=False)


def em_train_stochastic(ds: Dataset, cfg: TrainConfig | None = None):
    """EM where each iteration's E-step and M-step see only a random sample
    of ``ceil(sample_fraction * B)`` bags (drawn without replacement, fresh
    per iteration).  The gradient is left unscaled, matching the reference
    behaviour; with ``sample_fraction == 1`` this is exactly full-batch EM.
    """
    return _fit(ds, cfg or TrainConfig(), stochastic=True)


def bag_dp_cost(size: int, num_labels: int) -> int:
    """Nominal posterior cost of one bag: n * |Y| * 2^|Y|."""
    return size * num_labels * (1 << num_labels)


def dp_cost_sum(ds: Dataset) -> int:
    return sum(bag_dp_cost(b.size, len(b.label)) for b in ds.bags)


def prune_bags(ds: Dataset, fraction: float) -> Dataset:
    """Drop the ``ceil(fraction * B)`` most expensive bags.

    Expense is the nominal DP cost n * |Y| * 2^|Y|; cost ties at the cut
    keep the bag with the smaller id.  Remaining bags keep their original
    order.  ``fraction == 0`` returns an equivalent dataset unchanged.
    """
    if not 0 <= fraction < 1:
        raise ContractViolation("prune fraction must lie in [0, 1)")
    if not ds.bags:
        raise ContractViolation("cannot prune an empty dataset")
    if fraction == 0.0:
        return ds.subset(range(len(ds)))
    drop = math.ceil(fraction * len(ds))
    order = sorted(range(len(ds)),
                   key=lambda i: (bag_dp_cost(ds.bags[i].size,
                                              len(ds.bags[i].label)),
                                  ds.bags[i].id))
    kept = sorted(order[:len(ds) - drop])
    return ds.subset(kept)


def train_sisl(features: np.ndarray, labels: np.ndarray, num_classes: int,
               cfg: TrainConfig | None = None):
    """Plain single-instance single-label training with the same machinery.

    Runs the identical iteration loop with the posteriors pinned to the
    one-hot truth, which is what EM degenerates to when every bag holds one
    instance with a singleton label.  Returns ``(Model, TrainTrace)``.
    """
    cfg = cfg or TrainConfig()
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape[0] != features.shape[0]:
        raise ContractViolation("one label per feature row required")
    if labels.min(initial=0) < 0 or (labels >= num_classes).any():
        raise ContractViolation("labels outside [0, num_classes)")
    xaug = augment(features)
    posteriors = np.zeros((features.shape[0], num_classes))
    posteriors[np.arange(features.shape[0]), labels] = 1.0
    weights = zero_weights(features.shape[1], num_classes)
    trace = TrainTrace()

    def objective_at(w):
        scores = xaug @ w
        logp = scores[np.arange(len(labels)), labels] - _logsumexp_rows(scores)
        return float(logp.sum()) - _penalty(w, cfg.l2)

    for _ in range(cfg.em_iterations):
        t0 = time.perf_counter()
        objective = objective_at(weights)
        weights, f1, evals, _ = _gem_step_local(weights, posteriors, xaug, cfg)
        trace.surrogate.append(f1)
        trace.log_likelihood.append(objective)
        trace.backtrack_steps.append(evals)
        trace.estep_seconds.append(0.0)
        trace.iteration_seconds.append(time.perf_counter() - t0)
    trace.final_log_likelihood = objective_at(weights)
    model = Model(weights, num_classes, features.shape[1],
                  mode="linear", config=asdict(cfg))
    return model, trace


def fit_kernel(ds: Dataset, cfg: TrainConfig | None = None, *,
               scale: float = 1.0, dictionary_fraction: float = 1.0):
    """Train in similarity space: pick a width from the data, sample an
    anchor dictionary, re-express every instance, and run plain EM there.

    Returns ``(Model, TrainTrace)`` with the dictionary attached so the
    model can map raw features itself at prediction time.
    """
    cfg = cfg or TrainConfig()
    _require_valid(ds)
    if cfg.prune_fraction > 0.0:
        ds = prune_bags(ds, cfg.prune_fraction)
    delta = select_delta(ds, scale)
    dictionary = build_dictionary(ds, dictionary_fraction, cfg.seed,
                                  delta=delta, scale=scale)
    transformed = kernelize(ds, dictionary)
    inner = replace(cfg, prune_fraction=0.0)
    model, trace = _fit(transformed, inner,
                        stochastic=cfg.sample_fraction < 1)
    model = Model(model.weights, ds.num_classes, ds.feature_dim,
                  mode="kernel", dictionary=dictionary,
                  config=asdict(cfg))
    return model, trace
