"""Numpy implementations of the subset-DP kernels.

This is the fallback backend, used whenever the compiled extension is not
built; both backends expose the same functions over the same array layouts
(see :mod:`mimla.backend`).

All kernels work on a bag's prior probabilities restricted to its label-set
columns: ``p`` has shape (n, k) with column j holding the prior of the j-th
smallest labelled class.  Subset tables are 1-d arrays of length 2^k - 1 in
canonical rank order and carry one shared log-scale factor: after folding in
each instance the table is divided by its maximum and the log of that
maximum is accumulated, so long bags cannot underflow the linear-space
recursion.
"""
from __future__ import annotations

import numpy as np

from .subsets import SubsetStructure

# A computed subset mass this far below zero (relative to the table maximum)
# means cancellation ate the triangular solve; the caller falls back to the
# slower leave-one-out forward pass for that instance.  Smaller negatives are
# ordinary roundoff and are clamped to zero.
NEGATIVE_MASS_TOLERANCE = 1e-8


def forward_table(p: np.ndarray, st: SubsetStructure, upto: int):
    """Fold the first ``upto`` instances into a subset-mass table.

    Entry r is the probability that the instances seen so far union to
    exactly the r-th canonical subset, times ``exp(-log_scale)``.

    Returns ``(table, log_scale)``.
    """
    m = st.num_subsets
    k = st.k
    table = np.zeros(m + 1)  # trailing slot stays 0: the "empty subset" pad
    table[:k] = p[0, :]
    top = table[:m].max()
    if top <= 0.0:
        return table[:m], -np.inf
    table[:m] /= top
    log_scale = np.log(top)
    for i in range(1, upto):
        grown = table[st.row_of] + table[st.drop_pad]
        grown *= p[i, st.member]
        new = np.add.reduceat(grown, st.row_ptr[:-1])
        top = new.max()
        if top <= 0.0:
            table[:] = 0.0
            return table[:m], -np.inf
        new /= top
        log_scale += np.log(top)
        table[:m] = new
    return table[:m], log_scale


def solve_loo(u: np.ndarray, p_row: np.ndarray, st: SubsetStructure):
    """Back out the table that omits one instance from the full-bag table.

    Solves the lower-triangular system tying the full table ``u`` to the
    leave-one-out table via the omitted instance's priors ``p_row``; both
    tables share ``u``'s log scale.  Proceeds level by level: subsets of
    equal cardinality never reference each other, so each level is one
    vectorized division.

    Returns ``(v, flagged)`` where ``flagged`` reports that some mass went
    negative beyond roundoff and the result should not be trusted.
    """
    m = st.num_subsets
    coeff = p_row[st.member]
    diag = np.add.reduceat(coeff, st.row_ptr[:-1])
    eps = NEGATIVE_MASS_TOLERANCE * u.max()
    v = np.zeros(m + 1)
    flagged = False
    for level in range(st.k):
        lo, hi = int(st.level_ptr[level]), int(st.level_ptr[level + 1])
        tlo, thi = int(st.row_ptr[lo]), int(st.row_ptr[hi])
        settled = np.add.reduceat(
            coeff[tlo:thi] * v[st.drop_pad[tlo:thi]],
            st.row_ptr[lo:hi] - tlo,
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = (u[lo:hi] - settled) / diag[lo:hi]
        if not flagged and (vals < -eps).any():
            flagged = True
        np.maximum(vals, 0.0, out=vals)
        v[lo:hi] = vals
    return v[:m], flagged


def joint_from_table(p_row: np.ndarray, table: np.ndarray, st: SubsetStructure,
                     empty_mass: float = 0.0):
    """Per-class joint mass of (instance class, bag label set) from a table
    covering every other instance.  ``empty_mass`` is the mass the table
    assigns to the empty subset (1 when the table covers zero instances)."""
    m = st.num_subsets
    lo, hi = int(st.row_ptr[m - 1]), int(st.row_ptr[m])
    drops = st.drop_rank[lo:hi]
    drop_mass = np.where(drops >= 0, table[np.maximum(drops, 0)], empty_mass)
    return p_row[st.member[lo:hi]] * (table[m - 1] + drop_mass)


def bag_fast(p: np.ndarray, st: SubsetStructure):
    """Joint table for one bag via the single-pass route.

    One forward pass builds the full-bag table; each instance's leave-one-out
    table then comes from a triangular solve instead of its own pass.

    Returns ``(joint, log_scale, log_likelihood, flags)``: ``joint`` is
    (n, k) at the shared scale, ``flags`` marks instances whose solve went
    numerically bad (their joint rows need the forward fallback).
    """
    n = p.shape[0]
    if n == 1:
        return _single_instance(p, st)
    u, log_scale = forward_table(p, st, n)
    full = u[st.num_subsets - 1]
    if full > 0.0 and log_scale != -np.inf:
        loglik = np.log(full) + log_scale
    else:
        loglik = -np.inf
    joint = np.empty((n, st.k))
    flags = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        v, bad = solve_loo(u, p[i], st)
        joint[i] = joint_from_table(p[i], v, st)
        flags[i] = bad
    return joint, log_scale, loglik, flags


def bag_forward(p: np.ndarray, st: SubsetStructure):
    """Joint table for one bag via n separate leave-one-out forward passes.

    Slower but solves nothing, so it has no cancellation failure mode; it is
    both the reference engine and the per-instance fallback.

    Returns ``(joint, log_scale, log_likelihood)`` with all rows rescaled to
    one shared log scale.
    """
    n = p.shape[0]
    if n == 1:
        joint, log_scale, loglik, _ = _single_instance(p, st)
        return joint, log_scale, loglik
    joint = np.empty((n, st.k))
    scales = np.empty(n)
    for i in range(n):
        row, row_scale = instance_joint_forward(p, st, i)
        joint[i] = row
        scales[i] = row_scale
    log_scale = scales[0]
    for i in range(1, n):
        joint[i] *= np.exp(scales[i] - log_scale)
    total = joint[0].sum()
    loglik = np.log(total) + log_scale if total > 0.0 else -np.inf
    return joint, log_scale, loglik


def instance_joint_forward(p: np.ndarray, st: SubsetStructure, i: int):
    """Joint row for instance ``i`` from a fresh pass over the other rows.

    The omitted slot is filled by swapping in the last instance, so the pass
    runs over rows 0..n-2 with row i (when not last) replaced by row n-1.

    Returns ``(row, log_scale)`` at the pass's own scale.
    """
    n = p.shape[0]
    order = np.arange(n - 1)
    if i < n - 1:
        order[i] = n - 1
    table, log_scale = forward_table(np.ascontiguousarray(p[order]), st, n - 1)
    return joint_from_table(p[i], table, st), log_scale


def _single_instance(p: np.ndarray, st: SubsetStructure):
    # One instance forces a singleton label set; the leave-one-out table is
    # the zero-instance table, whose empty-subset mass is 1 by convention.
    joint = p[:1, :].copy()
    val = joint[0, 0]
    loglik = np.log(val) if val > 0.0 else -np.inf
    return joint, 0.0, loglik, np.zeros(1, dtype=np.uint8)


def batch_fast(p_packed: np.ndarray, bag_ptr: np.ndarray, st: SubsetStructure):
    """Run :func:`bag_fast` over bags packed row-to-row in one (sum n, k)
    array; ``bag_ptr`` holds each bag's first row index, length B+1.

    Returns ``(joint_packed, log_scales, logliks, flags_packed)``.
    """
    nbags = len(bag_ptr) - 1
    joint = np.empty_like(p_packed)
    log_scales = np.empty(nbags)
    logliks = np.empty(nbags)
    flags = np.zeros(p_packed.shape[0], dtype=np.uint8)
    for b in range(nbags):
        lo, hi = int(bag_ptr[b]), int(bag_ptr[b + 1])
        j, ls, ll, fl = bag_fast(p_packed[lo:hi], st)
        joint[lo:hi] = j
        log_scales[b] = ls
        logliks[b] = ll
        flags[lo:hi] = fl
    return joint, log_scales, logliks, flags


def batch_forward(p_packed: np.ndarray, bag_ptr: np.ndarray, st: SubsetStructure):
    """Run :func:`bag_forward` over packed bags; same layout as
    :func:`batch_fast`.  Flags are all zero (the forward route never needs a
    fallback)."""
    nbags = len(bag_ptr) - 1
    joint = np.empty_like(p_packed)
    log_scales = np.empty(nbags)
    logliks = np.empty(nbags)
    flags = np.zeros(p_packed.shape[0], dtype=np.uint8)
    for b in range(nbags):
        lo, hi = int(bag_ptr[b]), int(bag_ptr[b + 1])
        j, ls, ll = bag_forward(p_packed[lo:hi], st)
        joint[lo:hi] = j
        log_scales[b] = ls
        logliks[b] = ll
    return joint, log_scales, logliks, flags
