"""Exact instance-label posteriors under the union assumption.

Given per-instance prior class probabilities and a bag label set Y, these
functions compute p(y_i = c, Y | X) for every instance and class.  Three
routes exist:

- ``posteriors_forward``: one subset-DP forward pass per left-out instance
  (quadratic in bag size, no failure modes);
- ``posteriors_fast``: a single forward pass plus one triangular solve per
  instance (linear in bag size; falls back to the forward route for any
  instance whose solve cancels badly);
- ``posteriors_bruteforce``: direct enumeration of all label assignments,
  kept free of any shared DP code so it can serve as an independent oracle.

Tables and joints are held in linear space with a shared log-scale factor;
see :mod:`mimla._dp_python` for the scaling convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend as _backend
from .bags import MAX_LABELS_PER_BAG, LabelSet
from .errors import ContractViolation, NumericFailure, ZeroLikelihoodError
from .subsets import SubsetStructure, structure

BRUTE_FORCE_GUARD = 10**7


@dataclass
class SubsetTable:
    """Masses of every nonempty subset of a label set, canonical rank order.

    ``values[r] * exp(log_scale)`` is the probability that the labels of the
    ``instances`` instances folded in so far union to exactly the r-th
    subset.
    """

    label_set: LabelSet
    values: np.ndarray
    log_scale: float
    instances: int

    def mass(self, subset: LabelSet) -> float:
        """Unscaled probability mass of one subset."""
        from .subsets import subset_rank

        return float(self.values[subset_rank(self.label_set, subset)]
                     * np.exp(self.log_scale))


@dataclass
class JointMatrix:
    """p(y_i = c, Y | X) for every instance and class, up to a shared scale.

    ``values`` has the full class width; columns outside the bag's label set
    are exactly zero.  True joints are ``values * exp(log_scale)``.
    """

    values: np.ndarray
    log_scale: float


@dataclass
class PosteriorMatrix:
    """p(y_i = c | Y, X): rows sum to one, zero outside the label set."""

    values: np.ndarray


@dataclass
class SubstitutionMatrix:
    """The lower-triangular system tying a full-bag subset table to the
    table that omits one instance.

    Row r has the diagonal ``diag[r]`` (the omitted instance's total prior
    mass on subset r) and one off-diagonal entry per member class c whose
    removal leaves a nonempty subset: column ``off_col``, value the prior of
    the class that distinguishes the two subsets.
    """

    label_set: LabelSet
    diag: np.ndarray
    off_ptr: np.ndarray
    off_col: np.ndarray
    off_val: np.ndarray

    @property
    def size(self) -> int:
        return len(self.diag)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * np.asarray(v, dtype=np.float64)
        for r in range(self.size):
            lo, hi = int(self.off_ptr[r]), int(self.off_ptr[r + 1])
            out[r] += self.off_val[lo:hi] @ v[self.off_col[lo:hi]]
        return out

    def toarray(self) -> np.ndarray:
        dense = np.zeros((self.size, self.size))
        np.fill_diagonal(dense, self.diag)
        for r in range(self.size):
            lo, hi = int(self.off_ptr[r]), int(self.off_ptr[r + 1])
            dense[r, self.off_col[lo:hi]] = self.off_val[lo:hi]
        return dense


def _check_bag(priors: np.ndarray, label_set: LabelSet):
    """Shared validation; returns (priors, classes, structure)."""
    priors = np.ascontiguousarray(priors, dtype=np.float64)
    if priors.ndim != 2:
        raise ContractViolation("priors must be a 2-d (instances x classes) array")
    classes = label_set.classes()
    if not classes:
        raise ContractViolation("bag label set must be nonempty")
    if len(classes) > MAX_LABELS_PER_BAG:
        raise ContractViolation(
            f"label set of size {len(classes)} exceeds the cap of "
            f"{MAX_LABELS_PER_BAG}"
        )
    if classes[-1] >= priors.shape[1]:
        raise ContractViolation(
            f"label {classes[-1]} outside the {priors.shape[1]} prior columns"
        )
    if priors.shape[0] < len(classes):
        raise ZeroLikelihoodError(
            f"{priors.shape[0]} instances cannot cover {len(classes)} labels"
        )
    return priors, classes, structure(len(classes))


def _restrict(priors: np.ndarray, classes: list[int]) -> np.ndarray:
    """Label-set columns of the full prior matrix, C-contiguous."""
    return np.ascontiguousarray(priors[:, classes])


def _embed(values_sub: np.ndarray, classes: list[int], width: int) -> np.ndarray:
    """Scatter (n, k) label-set columns back into an (n, C) zero matrix."""
    out = np.zeros((values_sub.shape[0], width))
    out[:, classes] = values_sub
    return out


def forward_pass(priors: np.ndarray, label_set: LabelSet,
                 upto: int | None = None) -> SubsetTable:
    """Fold the first ``upto`` instances (default: all) into a subset table.

    Entry r holds the scaled probability that those instances' labels union
    to exactly the r-th canonical subset of ``label_set``.
    """
    priors, classes, st = _check_bag(priors, label_set)
    n = priors.shape[0]
    if upto is None:
        upto = n
    if not 1 <= upto <= n:
        raise ContractViolation(f"upto={upto} outside [1, {n}]")
    values, log_scale = _backend.active().forward_table(
        _restrict(priors, classes), st, upto)
    return SubsetTable(label_set, np.asarray(values), float(log_scale), upto)


def joint_last(prior_last: np.ndarray, table: SubsetTable,
               label_set: LabelSet) -> np.ndarray:
    """Joint mass p(y = c, Y) for one further instance appended to a table.

    ``table`` must cover all other instances of the bag.  The result is a
    full-width class vector at the table's log scale; for a single-instance
    bag pass the zero-instance table (``instances == 0``), whose empty-set
    mass counts as 1.
    """
    if table.label_set.mask != label_set.mask:
        raise ContractViolation("table was built for a different label set")
    prior_last = np.asarray(prior_last, dtype=np.float64).ravel()
    classes = label_set.classes()
    if classes[-1] >= prior_last.shape[0]:
        raise ContractViolation("prior row narrower than the label set")
    st = structure(len(classes))
    if table.instances == 0:
        # Zero instances elsewhere: only the "this instance covers Y alone"
        # path survives, which requires a singleton label set.
        if len(classes) != 1:
            raise ZeroLikelihoodError(
                "an empty table can only complete a singleton label set"
            )
        row = np.array([prior_last[classes[0]]])
    else:
        row = _backend.active().joint_from_table(
            np.ascontiguousarray(prior_last[classes]), table.values, st)
    return _embed(np.asarray(row)[None, :], classes, prior_last.shape[0])[0]


def substitution_matrix(prior_row: np.ndarray,
                        label_set: LabelSet) -> SubstitutionMatrix:
    """Assemble the explicit leave-one-out system for one instance's priors.

    Entry (r, s) is the prior of the single class separating subset r from
    subset s when s is r minus one member; the diagonal is the instance's
    total prior mass on subset r.  Everything else is zero, and every
    off-diagonal entry sits strictly below the diagonal because removing a
    member always lowers the canonical rank.
    """
    prior_row = np.asarray(prior_row, dtype=np.float64).ravel()
    classes = label_set.classes()
    if not classes:
        raise ContractViolation("bag label set must be nonempty")
    if classes[-1] >= prior_row.shape[0]:
        raise ContractViolation("prior row narrower than the label set")
    st = structure(len(classes))
    p_sub = prior_row[classes]
    coeff = p_sub[st.member]
    diag = np.add.reduceat(coeff, st.row_ptr[:-1])
    keep = st.drop_rank >= 0
    off_counts = np.add.reduceat(keep.astype(np.int64), st.row_ptr[:-1])
    off_ptr = np.zeros(st.num_subsets + 1, dtype=np.int64)
    np.cumsum(off_counts, out=off_ptr[1:])
    return SubstitutionMatrix(
        label_set=label_set,
        diag=diag,
        off_ptr=off_ptr,
        off_col=st.drop_rank[keep].copy(),
        off_val=coeff[keep].copy(),
    )


def leave_one_out_solve(u, system: SubstitutionMatrix):
    """Forward-substitute the triangular system: recover the subset table
    that omits the system's instance from the full-bag table ``u``.

    Accepts a :class:`SubsetTable` or a raw mass vector and returns the same
    kind, plus a flag set when some recovered mass went negative beyond the
    cancellation tolerance (small negatives are clamped to zero either way).
    """
    as_table = isinstance(u, SubsetTable)
    values = np.asarray(u.values if as_table else u, dtype=np.float64).ravel()
    m = system.size
    if values.shape[0] != m:
        raise ContractViolation(
            f"table has {values.shape[0]} entries, system expects {m}"
        )
    from ._dp_python import NEGATIVE_MASS_TOLERANCE

    eps = NEGATIVE_MASS_TOLERANCE * values.max()
    v = np.zeros(m)
    flagged = False
    for r in range(m):
        lo, hi = int(system.off_ptr[r]), int(system.off_ptr[r + 1])
        settled = system.off_val[lo:hi] @ v[system.off_col[lo:hi]]
        val = (values[r] - settled) / system.diag[r]
        if val < -eps:
            flagged = True
        v[r] = max(val, 0.0)
    if as_table:
        out = SubsetTable(u.label_set, v, u.log_scale, u.instances - 1)
        return out, flagged
    return v, flagged


def _finish(joint_sub, log_scale, loglik, classes, width, label_set):
    """Normalize, embed, and wrap raw kernel output; shared by all routes."""
    if not np.isfinite(loglik):
        raise NumericFailure(
            f"bag likelihood underflowed for label set {label_set.classes()}"
        )
    row_sums = joint_sub.sum(axis=1, keepdims=True)
    if (row_sums <= 0.0).any():
        raise NumericFailure("a posterior row lost all of its mass")
    joint = JointMatrix(_embed(joint_sub, classes, width), float(log_scale))
    post = PosteriorMatrix(_embed(joint_sub / row_sums, classes, width))
    return joint, post, float(loglik)


def posteriors_forward(priors: np.ndarray, label_set: LabelSet):
    """Posteriors via one leave-one-out forward pass per instance.

    Returns ``(JointMatrix, PosteriorMatrix, log_likelihood)``.
    """
    priors, classes, st = _check_bag(priors, label_set)
    p_sub = _restrict(priors, classes)
    joint_sub, log_scale, loglik, _ = _backend.active().batch_forward(
        p_sub, np.array([0, p_sub.shape[0]], dtype=np.int64), st)
    return _finish(joint_sub, log_scale[0], loglik[0], classes,
                   priors.shape[1], label_set)


def posteriors_fast(priors: np.ndarray, label_set: LabelSet):
    """Posteriors via one forward pass plus a triangular solve per instance.

    Any instance whose solve cancels badly is recomputed through the forward
    route, so the result is as trustworthy as :func:`posteriors_forward`.
    Returns ``(JointMatrix, PosteriorMatrix, log_likelihood)``.
    """
    priors, classes, st = _check_bag(priors, label_set)
    p_sub = _restrict(priors, classes)
    kernels = _backend.active()
    joint_sub, log_scale, loglik, flags = kernels.bag_fast(p_sub, st)
    for i in np.flatnonzero(flags):
        row, row_scale = kernels.instance_joint_forward(p_sub, st, int(i))
        joint_sub[i] = row * np.exp(row_scale - log_scale)
    return _finish(joint_sub, log_scale, loglik, classes,
                   priors.shape[1], label_set)


def posteriors_bruteforce(priors: np.ndarray, label_set: LabelSet,
                          guard: int = BRUTE_FORCE_GUARD):
    """Posteriors by enumerating every consistent label assignment.

    Exponential in bag size and deliberately free of any DP machinery: this
    is the oracle the other two routes are tested against.  Refuses bags
    with more than ``guard`` assignments.

    Returns ``(JointMatrix, PosteriorMatrix, log_likelihood)``.
    """
    priors, classes, _ = _check_bag(priors, label_set)
    k = len(classes)
    n = priors.shape[0]
    count = k**n
    if count > guard:
        raise ContractViolation(
            f"{k}^{n} assignments exceed the enumeration guard of {guard}"
        )
    p_sub = priors[:, classes]
    full_mask = (1 << k) - 1
    joint_sub = np.zeros((n, k))
    likelihood = 0.0
    chunk = 1 << 15
    radix = k ** np.arange(n, dtype=np.int64)
    for lo in range(0, count, chunk):
        idx = np.arange(lo, min(lo + chunk, count), dtype=np.int64)
        digits = (idx[:, None] // radix) % k
        probs = np.prod(p_sub[np.arange(n), digits], axis=1)
        covered = np.bitwise_or.reduce(1 << digits, axis=1) == full_mask
        likelihood += probs[covered].sum()
        for i in range(n):
            for c in range(k):
                sel = covered & (digits[:, i] == c)
                joint_sub[i, c] += probs[sel].sum()
    if likelihood <= 0.0:
        raise NumericFailure("no assignment carries mass for this label set")
    return _finish(joint_sub, 0.0, np.log(likelihood), classes,
                   priors.shape[1], label_set)


def bag_log_likelihood(priors: np.ndarray, label_set: LabelSet) -> float:
    """log p(Y | X): the full forward table's mass on Y itself."""
    priors, classes, st = _check_bag(priors, label_set)
    values, log_scale = _backend.active().forward_table(
        _restrict(priors, classes), st, priors.shape[0])
    full = values[st.num_subsets - 1]
    if full <= 0.0 or log_scale == -np.inf:
        raise NumericFailure(
            f"bag likelihood underflowed for label set {label_set.classes()}"
        )
    return float(np.log(full) + log_scale)
