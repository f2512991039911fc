"""Posterior-engine benchmark: wall time and deviation across bag sizes.

Each measurement point times one batched posterior computation over a fresh
set of random bags with a fixed instance count and label-set size.  The
deviation column compares posteriors against the enumeration oracle when
the assignment count permits, and against the other DP engine otherwise.
Rows are plain (engine, n_b, card, seconds, max_abs_err) records, so two
runs on different backends give a direct speed comparison.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from . import backend as _backend
from .errors import ContractViolation
from .model import softmax_rows
from .posterior import posteriors_bruteforce
from .bags import LabelSet
from .subsets import structure

ENGINES = ("forward", "fast", "brute")

# Above this assignment count the enumeration oracle is skipped and DP
# engines are compared against each other instead.
ORACLE_LIMIT = 3**13


@dataclass
class BenchRow:
    engine: str
    n_b: int
    card: int
    seconds: float
    max_abs_err: float


def _random_batch(rng, bags: int, n_b: int, card: int):
    """Packed random priors for ``bags`` bags of ``n_b`` instances whose
    label sets all have ``card`` classes out of ``card + 2``."""
    num_classes = card + 2
    scores = 1.5 * rng.standard_normal((bags * n_b, num_classes))
    priors = softmax_rows(scores)
    class_lists = [np.sort(rng.choice(num_classes, size=card, replace=False))
                   for _ in range(bags)]
    cls = np.repeat(np.stack(class_lists), n_b, axis=0)
    p_packed = np.ascontiguousarray(
        priors[np.arange(bags * n_b)[:, None], cls])
    bag_ptr = np.arange(bags + 1, dtype=np.int64) * n_b
    return priors, class_lists, p_packed, bag_ptr


def _posteriors_packed(kernels, engine: str, p_packed, bag_ptr, st):
    """Posterior rows for a packed batch under one DP engine, including the
    normalization and fallback work a real E-step performs."""
    batch = kernels.batch_fast if engine == "fast" else kernels.batch_forward
    joint, _, _, flags = batch(p_packed, bag_ptr, st)
    joint = np.asarray(joint)
    for pos in np.flatnonzero(flags):
        b = int(np.searchsorted(bag_ptr, pos, side="right")) - 1
        lo, hi = int(bag_ptr[b]), int(bag_ptr[b + 1])
        row, _ = kernels.instance_joint_forward(
            p_packed[lo:hi], st, int(pos - lo))
        joint[pos] = row
    return joint / joint.sum(axis=1, keepdims=True)


def _posteriors_brute(priors, class_lists, n_b):
    rows = []
    for b, classes in enumerate(class_lists):
        block = priors[b * n_b:(b + 1) * n_b]
        _, post, _ = posteriors_bruteforce(
            block, LabelSet.from_classes(classes))
        rows.append(post.values[:, classes])
    return np.concatenate(rows, axis=0)


def run_bench(engines: Iterable[str] = ("forward", "fast"),
              nb_values: Iterable[int] = (8, 16, 32, 64, 128),
              cards: Iterable[int] = (3,),
              bags: int = 64,
              repeats: int = 3,
              seed: int = 0,
              backend: str = "auto") -> list[BenchRow]:
    """Sweep engines over bag sizes and label-set sizes.

    ``seconds`` is the best of ``repeats`` timings of the full batch (one
    untimed warmup first).  The same random batch serves every engine at a
    given point, so rows are directly comparable.
    """
    engines = list(engines)
    for e in engines:
        if e not in ENGINES:
            raise ContractViolation(f"unknown engine {e!r}")
    if bags < 1 or repeats < 1:
        raise ContractViolation("bags and repeats must be positive")
    kernels = _backend.resolve(backend)
    rows = []
    for card in cards:
        st = structure(card)
        for n_b in nb_values:
            if n_b < card:
                raise ContractViolation(
                    f"n_b={n_b} cannot cover {card} labels")
            rng = np.random.default_rng(seed + 1000 * card + n_b)
            priors, class_lists, p_packed, bag_ptr = _random_batch(
                rng, bags, n_b, card)
            oracle_ok = card**n_b <= ORACLE_LIMIT
            reference = _posteriors_brute(priors, class_lists, n_b) \
                if oracle_ok else None
            computed: dict[str, np.ndarray] = {}
            for engine in engines:
                if engine == "brute":
                    if not oracle_ok:
                        continue
                    runner = lambda: _posteriors_brute(
                        priors, class_lists, n_b)
                else:
                    runner = lambda e=engine: _posteriors_packed(
                        kernels, e, p_packed, bag_ptr, st)
                runner()  # warmup
                best = np.inf
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    post = runner()
                    best = min(best, time.perf_counter() - t0)
                computed[engine] = post
                if engine == "brute":
                    err = 0.0
                elif reference is not None:
                    err = float(np.abs(post - reference).max())
                else:
                    other = "forward" if engine == "fast" else "fast"
                    alt = computed.get(other)
                    if alt is None:
                        alt = _posteriors_packed(kernels, other, p_packed,
                                                 bag_ptr, st)
                        computed[other] = alt
                    err = float(np.abs(post - alt).max())
                rows.append(BenchRow(engine, n_b, card, best, err))
    return rows


def write_csv(rows: Iterable[BenchRow], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["engine", "n_b", "card", "seconds", "max_abs_err"])
    for row in rows:
        writer.writerow([row.engine, row.n_b, row.card,
                         f"{row.seconds:.6e}", f"{row.max_abs_err:.3e}"])


def loglog_slope(nb_values, seconds) -> float:
    """Least-squares slope of log(seconds) against log(n_b)."""
    x = np.log(np.asarray(nb_values, dtype=np.float64))
    y = np.log(np.asarray(seconds, dtype=np.float64))
    x = x - x.mean()
    return float((x @ (y - y.mean())) / (x @ x))
