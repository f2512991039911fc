# cython: language_level=3
"""Compiled subset-DP kernels.

Mirrors :mod:`mimla._dp_python` function for function; see that module for
the array-layout and scaling conventions.  The batched entry points keep the
per-bag loop in C, which is what makes E-step cost scale with instance count
rather than with Python call overhead.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8

NEGATIVE_MASS_TOLERANCE = 1e-8
cdef double NEG_TOL = 1e-8


cdef double _forward_over(const double[:, ::1] p, Py_ssize_t row0,
                          const i64[::1] rows, Py_ssize_t nrows,
                          const i64[::1] row_ptr, const i64[::1] member,
                          const i64[::1] drop_rank, Py_ssize_t m,
                          Py_ssize_t k, double[::1] table,
                          double[::1] aux) nogil:
    """Fill ``table`` (length m) with the subset masses of the given prior
    rows; returns the accumulated log scale (-INFINITY if the table died)."""
    cdef Py_ssize_t i, r, t, ri
    cdef double acc, top, log_scale

    ri = row0 + rows[0]
    for r in range(m):
        table[r] = 0.0
    for r in range(k):
        table[r] = p[ri, r]
    top = 0.0
    for r in range(m):
        if table[r] > top:
            top = table[r]
    if top <= 0.0:
        return -INFINITY
    for r in range(m):
        table[r] /= top
    log_scale = log(top)

    for i in range(1, nrows):
        ri = row0 + rows[i]
        for r in range(m):
            acc = 0.0
            for t in range(row_ptr[r], row_ptr[r + 1]):
                if drop_rank[t] >= 0:
                    acc += (table[r] + table[drop_rank[t]]) * p[ri, member[t]]
                else:
                    acc += table[r] * p[ri, member[t]]
            aux[r] = acc
        top = 0.0
        for r in range(m):
            if aux[r] > top:
                top = aux[r]
        if top <= 0.0:
            for r in range(m):
                table[r] = 0.0
            return -INFINITY
        for r in range(m):
            table[r] = aux[r] / top
        log_scale += log(top)
    return log_scale


cdef int _solve(const double[::1] u, const double[:, ::1] p, Py_ssize_t prow,
                const i64[::1] row_ptr, const i64[::1] member,
                const i64[::1] drop_rank, Py_ssize_t m,
                double[::1] v) nogil:
    """Lower-triangular solve for the leave-one-out table; returns 1 when a
    mass went negative beyond the cancellation tolerance."""
    cdef Py_ssize_t r, t
    cdef double acc, diag, val, eps, top
    cdef int flagged = 0

    top = 0.0
    for r in range(m):
        if u[r] > top:
            top = u[r]
    eps = NEG_TOL * top
    for r in range(m):
        acc = 0.0
        diag = 0.0
        for t in range(row_ptr[r], row_ptr[r + 1]):
            diag += p[prow, member[t]]
            if drop_rank[t] >= 0:
                acc += p[prow, member[t]] * v[drop_rank[t]]
        val = (u[r] - acc) / diag
        if val < -eps:
            flagged = 1
        if val < 0.0:
            val = 0.0
        v[r] = val
    return flagged


cdef void _joint_row(const double[:, ::1] p, Py_ssize_t prow,
                     const double[::1] table, double empty_mass,
                     const i64[::1] row_ptr, const i64[::1] member,
                     const i64[::1] drop_rank, Py_ssize_t m,
                     double[:, ::1] out, Py_ssize_t orow) nogil:
    cdef Py_ssize_t t, c
    cdef double full = table[m - 1]
    cdef double drop_mass
    for t in range(row_ptr[m - 1], row_ptr[m]):
        c = member[t]
        if drop_rank[t] >= 0:
            drop_mass = table[drop_rank[t]]
        else:
            drop_mass = empty_mass
        out[orow, c] = p[prow, c] * (full + drop_mass)


cdef double _bag_fast_c(const double[:, ::1] p, Py_ssize_t row0, Py_ssize_t n,
                        const i64[::1] row_ptr, const i64[::1] member,
                        const i64[::1] drop_rank, Py_ssize_t m, Py_ssize_t k,
                        double[::1] table, double[::1] aux, double[::1] v,
                        const i64[::1] identity,
                        double[:, ::1] joint, Py_ssize_t jrow0,
                        u8[::1] flags, Py_ssize_t frow0,
                        double* log_scale) nogil:
    """Single-pass route for one bag; returns the log likelihood."""
    cdef Py_ssize_t i
    cdef double ls, full, loglik

    if n == 1:
        joint[jrow0, 0] = p[row0, 0]
        flags[frow0] = 0
        log_scale[0] = 0.0
        return log(p[row0, 0]) if p[row0, 0] > 0.0 else -INFINITY

    ls = _forward_over(p, row0, identity, n, row_ptr, member, drop_rank,
                       m, k, table, aux)
    log_scale[0] = ls
    full = table[m - 1]
    if full > 0.0 and ls != -INFINITY:
        loglik = log(full) + ls
    else:
        loglik = -INFINITY
    for i in range(n):
        flags[frow0 + i] = <u8> _solve(table, p, row0 + i, row_ptr, member,
                                       drop_rank, m, v)
        _joint_row(p, row0 + i, v, 0.0, row_ptr, member, drop_rank, m,
                   joint, jrow0 + i)
    return loglik


cdef double _bag_forward_c(const double[:, ::1] p, Py_ssize_t row0,
                           Py_ssize_t n,
                           const i64[::1] row_ptr, const i64[::1] member,
                           const i64[::1] drop_rank, Py_ssize_t m,
                           Py_ssize_t k,
                           double[::1] table, double[::1] aux,
                           i64[::1] order,
                           double[:, ::1] joint, Py_ssize_t jrow0,
                           double* log_scale) nogil:
    """Leave-one-out forward route for one bag; returns the log likelihood."""
    cdef Py_ssize_t i, j, c
    cdef double ls0, ls, total, factor

    if n == 1:
        joint[jrow0, 0] = p[row0, 0]
        log_scale[0] = 0.0
        return log(p[row0, 0]) if p[row0, 0] > 0.0 else -INFINITY

    ls0 = 0.0
    for i in range(n):
        for j in range(n - 1):
            order[j] = j
        if i < n - 1:
            order[i] = n - 1
        ls = _forward_over(p, row0, order, n - 1, row_ptr, member,
                           drop_rank, m, k, table, aux)
        _joint_row(p, row0 + i, table, 0.0, row_ptr, member, drop_rank, m,
                   joint, jrow0 + i)
        if i == 0:
            ls0 = ls
        else:
            factor = exp(ls - ls0)
            for c in range(k):
                joint[jrow0 + i, c] *= factor
    log_scale[0] = ls0
    total = 0.0
    for c in range(k):
        total += joint[jrow0, c]
    return log(total) + ls0 if total > 0.0 else -INFINITY


# ---------------------------------------------------------------------------
# Python-visible API (same shapes and return conventions as _dp_python)

def forward_table(const double[:, ::1] p, st, Py_ssize_t upto):
    cdef Py_ssize_t m = st.num_subsets
    cdef Py_ssize_t k = st.k
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    table = np.empty(m)
    aux = np.empty(m)
    rows = np.arange(upto, dtype=np.int64)
    cdef double ls = _forward_over(p, 0, rows, upto, row_ptr, member,
                                   drop_rank, m, k, table, aux)
    return table, ls


def solve_loo(const double[::1] u, p_row, st):
    cdef Py_ssize_t m = st.num_subsets
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    v = np.empty(m)
    p2 = np.ascontiguousarray(p_row, dtype=np.float64).reshape(1, -1)
    cdef int flagged = _solve(u, p2, 0, row_ptr, member, drop_rank, m, v)
    return v, bool(flagged)


def joint_from_table(p_row, const double[::1] table, st,
                     double empty_mass=0.0):
    cdef Py_ssize_t m = st.num_subsets
    cdef Py_ssize_t k = st.k
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    out = np.empty((1, k))
    p2 = np.ascontiguousarray(p_row, dtype=np.float64).reshape(1, -1)
    _joint_row(p2, 0, table, empty_mass, row_ptr, member, drop_rank, m,
               out, 0)
    return out[0]


def instance_joint_forward(const double[:, ::1] p, st, Py_ssize_t i):
    cdef Py_ssize_t m = st.num_subsets
    cdef Py_ssize_t k = st.k
    cdef Py_ssize_t n = p.shape[0]
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    table = np.empty(m)
    aux = np.empty(m)
    order = np.arange(n - 1, dtype=np.int64)
    if i < n - 1:
        order[i] = n - 1
    cdef double ls = _forward_over(p, 0, order, n - 1, row_ptr, member,
                                   drop_rank, m, k, table, aux)
    row = np.empty((1, k))
    _joint_row(p, i, table, 0.0, row_ptr, member, drop_rank, m, row, 0)
    return row[0], ls


def bag_fast(const double[:, ::1] p, st):
    cdef Py_ssize_t m = st.num_subsets
    cdef Py_ssize_t k = st.k
    cdef Py_ssize_t n = p.shape[0]
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    joint = np.empty((n, k))
    flags = np.zeros(n, dtype=np.uint8)
    table = np.empty(m)
    aux = np.empty(m)
    v = np.empty(m)
    identity = np.arange(n, dtype=np.int64)
    cdef double ls = 0.0
    cdef double ll = _bag_fast_c(p, 0, n, row_ptr, member, drop_rank, m, k,
                                 table, aux, v, identity, joint, 0, flags, 0,
                                 &ls)
    return joint, ls, ll, flags


def bag_forward(const double[:, ::1] p, st):
    cdef Py_ssize_t m = st.num_subsets
    cdef Py_ssize_t k = st.k
    cdef Py_ssize_t n = p.shape[0]
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    joint = np.empty((n, k))
    table = np.empty(m)
    aux = np.empty(m)
    order = np.arange(max(n - 1, 1), dtype=np.int64)
    cdef double ls = 0.0
    cdef double ll = _bag_forward_c(p, 0, n, row_ptr, member, drop_rank, m,
                                    k, table, aux, order, joint, 0, &ls)
    return joint, ls, ll


def batch_fast(const double[:, ::1] p_packed, const i64[::1] bag_ptr, st):
    cdef Py_ssize_t m = st.num_subsets
    cdef Py_ssize_t k = st.k
    cdef Py_ssize_t nbags = bag_ptr.shape[0] - 1
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    cdef Py_ssize_t b, lo, n, max_n = 1
    for b in range(nbags):
        n = bag_ptr[b + 1] - bag_ptr[b]
        if n > max_n:
            max_n = n
    joint = np.empty((p_packed.shape[0], k))
    log_scales = np.empty(nbags)
    logliks = np.empty(nbags)
    flags = np.zeros(p_packed.shape[0], dtype=np.uint8)
    table = np.empty(m)
    aux = np.empty(m)
    v = np.empty(m)
    identity = np.arange(max_n, dtype=np.int64)
    cdef double[:, ::1] jv = joint
    cdef double[::1] lsv = log_scales
    cdef double[::1] llv = logliks
    cdef u8[::1] fv = flags
    cdef double[::1] tv = table
    cdef double[::1] av = aux
    cdef double[::1] vv = v
    cdef const i64[::1] iv = identity
    with nogil:
        for b in range(nbags):
            lo = bag_ptr[b]
            n = bag_ptr[b + 1] - lo
            llv[b] = _bag_fast_c(p_packed, lo, n, row_ptr, member, drop_rank,
                                 m, k, tv, av, vv, iv, jv, lo, fv, lo,
                                 &lsv[b])
    return joint, log_scales, logliks, flags


def batch_forward(const double[:, ::1] p_packed, const i64[::1] bag_ptr, st):
    cdef Py_ssize_t m = st.num_subsets
    cdef Py_ssize_t k = st.k
    cdef Py_ssize_t nbags = bag_ptr.shape[0] - 1
    cdef const i64[::1] row_ptr = st.row_ptr
    cdef const i64[::1] member = st.member
    cdef const i64[::1] drop_rank = st.drop_rank
    cdef Py_ssize_t b, lo, n, max_n = 2
    for b in range(nbags):
        n = bag_ptr[b + 1] - bag_ptr[b]
        if n > max_n:
            max_n = n
    joint = np.empty((p_packed.shape[0], k))
    log_scales = np.empty(nbags)
    logliks = np.empty(nbags)
    flags = np.zeros(p_packed.shape[0], dtype=np.uint8)
    table = np.empty(m)
    aux = np.empty(m)
    order = np.empty(max_n - 1, dtype=np.int64)
    cdef double[:, ::1] jv = joint
    cdef double[::1] lsv = log_scales
    cdef double[::1] llv = logliks
    cdef double[::1] tv = table
    cdef double[::1] av = aux
    cdef i64[::1] ov = order
    with nogil:
        for b in range(nbags):
            lo = bag_ptr[b]
            n = bag_ptr[b + 1] - lo
            llv[b] = _bag_forward_c(p_packed, lo, n, row_ptr, member,
                                    drop_rank, m, k, tv, av, ov, jv, lo,
                                    &lsv[b])
    return joint, log_scales, logliks, flags
