# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the batch sampling kernels.

Calls numpy's C distribution functions straight through the
BitGenerator capsule, holding the generator lock and releasing the GIL
for the sampling loops.  Draw order matches the numpy reference
backend: one pass of counts, then severities accumulated per subject
in event order, so outputs are bit-for-bit identical.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.stdint cimport int64_t

import numpy as np

from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_gamma,
    random_lognormal,
    random_negative_binomial,
    random_poisson,
)

cdef int _FREQ_POISSON = 0
cdef int _FREQ_NEGBIN = 1
cdef int _FREQ_FIXED = 2

cdef int _SEV_GAMMA = 0

cdef const char *_CAPSULE_NAME = b"BitGenerator"


cdef bitgen_t *_extract(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, _CAPSULE_NAME):
        raise ValueError("object does not expose a BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE_NAME)


cdef void _fill_aggregates(
    bitgen_t *state,
    int64_t[::1] counts,
    double[::1] out,
    int sev_kind,
    double sa,
    double sb,
) noexcept nogil:
    cdef Py_ssize_t i, j, n = counts.shape[0]
    cdef double acc
    if sev_kind == 0:
        for i in range(n):
            acc = 0.0
            for j in range(counts[i]):
                acc = acc + random_gamma(state, sa, sb)
            out[i] = acc
    else:
        for i in range(n):
            acc = 0.0
            for j in range(counts[i]):
                acc = acc + random_lognormal(state, sa, sb)
            out[i] = acc


def compound_aggregates(object bit_generator, Py_ssize_t n, int freq_kind,
                        double fa, double fb, int sev_kind, double sa, double sb):
    cdef bitgen_t *state = _extract(bit_generator)
    counts_arr = np.empty(n, dtype=np.int64)
    out_arr = np.empty(n, dtype=np.float64)
    if n == 0:
        return out_arr
    cdef int64_t[::1] counts = counts_arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef int64_t fixed = <int64_t> fa
    with bit_generator.lock, nogil:
        if freq_kind == _FREQ_POISSON:
            for i in range(n):
                counts[i] = random_poisson(state, fa)
        elif freq_kind == _FREQ_NEGBIN:
            for i in range(n):
                counts[i] = random_negative_binomial(state, fa, fb)
        else:
            for i in range(n):
                counts[i] = fixed
        _fill_aggregates(state, counts, out, sev_kind, sa, sb)
    return out_arr


def compound_aggregates_rates(object bit_generator, object rates,
                              int sev_kind, double sa, double sb):
    cdef bitgen_t *state = _extract(bit_generator)
    rates_arr = np.ascontiguousarray(rates, dtype=np.float64)
    cdef Py_ssize_t n = rates_arr.shape[0]
    counts_arr = np.empty(n, dtype=np.int64)
    out_arr = np.empty(n, dtype=np.float64)
    if n == 0:
        return out_arr
    cdef double[::1] r = rates_arr
    cdef int64_t[::1] counts = counts_arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with bit_generator.lock, nogil:
        for i in range(n):
            counts[i] = random_poisson(state, r[i])
        _fill_aggregates(state, counts, out, sev_kind, sa, sb)
    return out_arr
