"""Canonical enumeration of the nonempty subsets of a bag's label set.

Every DP table indexes subsets by their rank under one fixed order:
ascending cardinality, ties broken lexicographically on the sorted member
list.  Under that order, removing one element from a subset always lands on
a strictly smaller rank, which is what makes the leave-one-out system
exactly lower triangular.

Structures are built on "local" positions 0..k-1 (position j is the j-th
smallest class in the label set) and cached per k, so all bags sharing a
label-set size reuse one table.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bags import MAX_LABELS_PER_BAG, LabelSet
from .errors import ContractViolation


@dataclass(frozen=True)
class SubsetStructure:
    """Flattened transition tables for the 2^k - 1 nonempty local subsets.

    For each subset rank r (canonical order) and each member position c of
    that subset there is one transition entry t in
    ``row_ptr[r] <= t < row_ptr[r+1]``:

    - ``member[t]``   the member's local position c,
    - ``drop_rank[t]`` the rank of the subset with c removed, -1 if empty,
    - ``drop_pad[t]``  same, but -1 replaced by M so a table padded with a
      trailing zero can be gathered without branching,
    - ``row_of[t]``    r itself (for vectorized per-row reductions).

    ``level_ptr[c]`` is the first rank of cardinality c+1; ranks are grouped
    by cardinality, so ``level_ptr`` slices the order into levels.
    """

    k: int
    masks: np.ndarray
    rank_of_mask: np.ndarray
    row_ptr: np.ndarray
    member: np.ndarray
    drop_rank: np.ndarray
    drop_pad: np.ndarray
    row_of: np.ndarray
    level_ptr: np.ndarray

    @property
    def num_subsets(self) -> int:
        return len(self.masks)


def _bits(mask: int) -> tuple[int, ...]:
    return tuple(c for c in range(mask.bit_length()) if mask >> c & 1)


@lru_cache(maxsize=None)
def structure(k: int) -> SubsetStructure:
    """The cached transition structure for label sets of size ``k``."""
    if not 1 <= k <= MAX_LABELS_PER_BAG:
        raise ContractViolation(
            f"label-set size {k} outside [1, {MAX_LABELS_PER_BAG}]"
        )
    all_masks = sorted(range(1, 1 << k), key=lambda m: (m.bit_count(), _bits(m)))
    m_count = len(all_masks)
    rank_of_mask = np.full(1 << k, -1, dtype=np.int64)
    for r, mask in enumerate(all_masks):
        rank_of_mask[mask] = r

    row_ptr = np.zeros(m_count + 1, dtype=np.int64)
    member, drop_rank, row_of = [], [], []
    for r, mask in enumerate(all_masks):
        for c in _bits(mask):
            member.append(c)
            smaller = mask & ~(1 << c)
            drop_rank.append(-1 if smaller == 0 else int(rank_of_mask[smaller]))
            row_of.append(r)
        row_ptr[r + 1] = len(member)

    drop_rank_arr = np.array(drop_rank, dtype=np.int64)
    level_ptr = np.zeros(k + 1, dtype=np.int64)
    cards = np.array([m.bit_count() for m in all_masks])
    for c in range(1, k + 1):
        level_ptr[c] = int(np.searchsorted(cards, c, side="right"))

    return SubsetStructure(
        k=k,
        masks=np.array(all_masks, dtype=np.int64),
        rank_of_mask=rank_of_mask,
        row_ptr=row_ptr,
        member=np.array(member, dtype=np.int64),
        drop_rank=drop_rank_arr,
        drop_pad=np.where(drop_rank_arr < 0, m_count, drop_rank_arr),
        row_of=np.array(row_of, dtype=np.int64),
        level_ptr=level_ptr,
    )


def canonical_subset_order(label_set: LabelSet) -> list[LabelSet]:
    """All nonempty subsets of ``label_set``, in canonical order.

    Ascending cardinality first, lexicographic on the sorted class list
    within a cardinality; the full set is always last.
    """
    classes = label_set.classes()
    if not classes:
        raise ContractViolation("label set must be nonempty")
    st = structure(len(classes))
    out = []
    for local_mask in st.masks:
        members = (classes[j] for j in _bits(int(local_mask)))
        out.append(LabelSet.from_classes(members))
    return out


def subset_rank(label_set: LabelSet, subset: LabelSet) -> int:
    """Rank of ``subset`` within the canonical order of ``label_set``."""
    classes = label_set.classes()
    st = structure(len(classes))
    local = 0
    for j, c in enumerate(classes):
        if c in subset:
            local |= 1 << j
    if local == 0 or subset.mask & ~label_set.mask:
        raise ContractViolation(
            f"{subset!r} is not a nonempty subset of {label_set!r}"
        )
    return int(st.rank_of_mask[local])
