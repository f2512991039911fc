"""Dataset-wide posterior computation for the trainer.

Per-bag kernel calls from Python would drown small bags in call overhead,
so the plan packs every bag's label-set prior columns into one array per
label-set size and hands whole groups to the backend's batched kernels.
The plan is built once per dataset (or per sampled subset) and reused every
iteration.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import backend as _backend
from .bags import Dataset
from .errors import NumericFailure
from .model import augment, softmax_rows
from .subsets import structure


@dataclass
class _Group:
    """All of a plan's bags sharing one label-set size."""

    k: int
    bag_pos: np.ndarray    # positions within the plan's bag list
    row_local: np.ndarray  # packed instance rows -> plan-local instance rows
    cls: np.ndarray        # (rows, k) class columns, one row per instance
    bag_ptr: np.ndarray    # packed row offsets per bag, length g+1


@dataclass
class EStepResult:
    priors: np.ndarray      # (L, C) instance priors at the given weights
    posteriors: np.ndarray  # (L, C) exact posteriors, zero outside label sets
    logliks: np.ndarray     # (B,) per-bag log p(Y_b | X_b)
    fallbacks: int          # instances recomputed through the forward route
    seconds: float          # wall time of the posterior computation


class EStepPlan:
    """Packed view of a dataset (or a subset of its bags)."""

    def __init__(self, ds: Dataset, bag_indices=None, _parent=None):
        self.ds = ds
        self.num_classes = ds.num_classes
        if _parent is None:
            self._xaug_all = augment(ds.stacked_features())
            self._sizes = np.array([b.size for b in ds.bags], dtype=np.int64)
            self._starts = np.zeros(len(ds.bags) + 1, dtype=np.int64)
            np.cumsum(self._sizes, out=self._starts[1:])
            self._classes = [np.asarray(b.label.classes(), dtype=np.int64)
                             for b in ds.bags]
        else:
            self._xaug_all = _parent._xaug_all
            self._sizes = _parent._sizes
            self._starts = _parent._starts
            self._classes = _parent._classes

        if bag_indices is None:
            self.bag_indices = np.arange(len(ds.bags), dtype=np.int64)
            self.xaug = self._xaug_all
        else:
            self.bag_indices = np.asarray(bag_indices, dtype=np.int64)
            rows = np.concatenate(
                [np.arange(self._starts[b], self._starts[b] + self._sizes[b])
                 for b in self.bag_indices]) if len(self.bag_indices) else \
                np.zeros(0, dtype=np.int64)
            self.xaug = self._xaug_all[rows]
        self.num_bags = len(self.bag_indices)
        self.num_rows = self.xaug.shape[0]
        self._build_groups()

    def subset(self, bag_indices) -> "EStepPlan":
        """A plan over the given bags (ascending order recommended), sharing
        this plan's feature matrix."""
        return EStepPlan(self.ds, bag_indices, _parent=self)

    def _build_groups(self):
        local_starts = np.zeros(self.num_bags + 1, dtype=np.int64)
        np.cumsum(self._sizes[self.bag_indices], out=local_starts[1:])
        by_k: dict[int, list[int]] = {}
        for pos, b in enumerate(self.bag_indices):
            by_k.setdefault(len(self._classes[b]), []).append(pos)
        self.groups = []
        for k in sorted(by_k):
            positions = np.array(by_k[k], dtype=np.int64)
            sizes = self._sizes[self.bag_indices[positions]]
            bag_ptr = np.zeros(len(positions) + 1, dtype=np.int64)
            np.cumsum(sizes, out=bag_ptr[1:])
            row_local = np.concatenate(
                [np.arange(local_starts[p], local_starts[p + 1])
                 for p in positions])
            cls = np.repeat(
                np.stack([self._classes[self.bag_indices[p]]
                          for p in positions]),
                sizes, axis=0)
            self.groups.append(_Group(k, positions, row_local, cls, bag_ptr))

    def run(self, weights: np.ndarray, engine: str = "fast") -> EStepResult:
        """Priors, posteriors, and per-bag log likelihoods at ``weights``."""
        kernels = _backend.active()
        batch = kernels.batch_fast if engine == "fast" else kernels.batch_forward
        t0 = time.perf_counter()
        priors = softmax_rows(self.xaug @ weights)
        posteriors = np.zeros_like(priors)
        logliks = np.empty(self.num_bags)
        fallbacks = 0
        for g in self.groups:
            st = structure(g.k)
            p_packed = np.ascontiguousarray(priors[g.row_local[:, None], g.cls])
            joint, _, ll, flags = batch(
                p_packed, g.bag_ptr, st)
            joint = np.asarray(joint)
            for pos in np.flatnonzero(flags):
                b = int(np.searchsorted(g.bag_ptr, pos, side="right")) - 1
                lo, hi = int(g.bag_ptr[b]), int(g.bag_ptr[b + 1])
                row, _ = kernels.instance_joint_forward(
                    p_packed[lo:hi], st, int(pos - lo))
                joint[pos] = row  # any scale: normalized row by row below
                fallbacks += 1
            sums = joint.sum(axis=1, keepdims=True)
            if (sums <= 0.0).any():
                bad = g.bag_pos[int(np.searchsorted(
                    g.bag_ptr, int(np.flatnonzero(sums <= 0.0)[0]),
                    side="right")) - 1]
                raise NumericFailure(
                    f"bag {self.ds.bags[self.bag_indices[bad]].id!r}: "
                    "posterior mass underflowed"
                )
            posteriors[g.row_local[:, None], g.cls] = joint / sums
            logliks[g.bag_pos] = np.asarray(ll)
        if not np.isfinite(logliks).all():
            bad = int(np.flatnonzero(~np.isfinite(logliks))[0])
            raise NumericFailure(
                f"bag {self.ds.bags[self.bag_indices[bad]].id!r}: "
                "likelihood underflowed"
            )
        return EStepResult(priors, posteriors, logliks, fallbacks,
                           time.perf_counter() - t0)
