"""Cross-validated evaluation of the full training pipeline."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bags import Dataset
from .metrics import (MetricReport, dummy_baselines, evaluate, kfold_split,
                      predict_dataset)
from .train import TrainConfig, em_train, em_train_stochastic, fit_kernel


@dataclass
class FoldResult:
    inductive: MetricReport
    transductive: MetricReport
    dummy: MetricReport


@dataclass
class CVResult:
    folds: list[FoldResult]

    def mean(self, mode: str, metric: str) -> float:
        """Average one metric over folds; None values are skipped."""
        values = [getattr(getattr(f, mode), metric) for f in self.folds]
        values = [v for v in values if v is not None]
        return float(np.mean(values)) if values else float("nan")

    def to_dict(self) -> dict:
        out: dict = {"folds": []}
        for f in self.folds:
            out["folds"].append({
                "inductive": f.inductive.to_dict(),
                "transductive": f.transductive.to_dict(),
                "dummy": f.dummy.to_dict(),
            })
        out["mean"] = {
            mode: {
                metric: self.mean(mode, metric)
                for metric in ("instance_accuracy", "hamming_loss",
                               "ranking_loss", "one_error", "coverage",
                               "average_precision")
            }
            for mode in ("inductive", "transductive", "dummy")
        }
        return out


def cross_validate(ds: Dataset, cfg: TrainConfig, folds: int = 10, *,
                   split_seed: int = 0, kernel: bool = False,
                   kernel_scale: float = 1.0,
                   dictionary_fraction: float = 1.0,
                   stochastic: bool = False,
                   threads: int = 1) -> CVResult:
    """Train on k-1 folds, evaluate on the held-out fold, k times over.

    Fold results are deterministic for a given dataset, config, and split
    seed regardless of ``threads``: folds are independent and reassembled
    in fold order.
    """
    splits = kfold_split(ds, folds, split_seed)

    def run_fold(pair) -> FoldResult:
        train_idx, test_idx = pair
        train_ds, test_ds = ds.subset(train_idx), ds.subset(test_idx)
        if kernel:
            model, _ = fit_kernel(train_ds, cfg, scale=kernel_scale,
                                  dictionary_fraction=dictionary_fraction)
        elif stochastic:
            model, _ = em_train_stochastic(train_ds, cfg)
        else:
            model, _ = em_train(train_ds, cfg)
        dummy_preds, _ = dummy_baselines(train_ds, test_ds)
        return FoldResult(
            inductive=evaluate(
                predict_dataset(model, test_ds, "inductive"), test_ds),
            transductive=evaluate(
                predict_dataset(model, test_ds, "transductive"), test_ds),
            dummy=evaluate(dummy_preds, test_ds),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_fold, splits))
    else:
        results = [run_fold(pair) for pair in splits]
    return CVResult(results)
