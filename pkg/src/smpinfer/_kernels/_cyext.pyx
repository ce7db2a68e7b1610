# Compiled twins of the kernels in np_backend.py.  The draw-order contract
# documented there is normative; these loops consume generator doubles in
# exactly the same sequence, so outputs are bit-identical across backends.

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t

cnp.import_array()


cdef bitgen_t* _bitgen_of(object gen) except NULL:
    capsule = gen.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("generator does not expose a BitGenerator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline Py_ssize_t _bisect_right(const double[::1] pcum, double u, Py_ssize_t k) nogil:
    cdef Py_ssize_t lo = 0, hi = k, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if pcum[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    if lo >= k:
        lo = k - 1
    return lo


def block_trials(const double[::1] pcum, const cnp.int64_t[::1] part_of,
                 Py_ssize_t m, Py_ssize_t trials, object gen):
    cdef bitgen_t* bg = _bitgen_of(gen)
    cdef Py_ssize_t k = pcum.shape[0]
    cdef Py_ssize_t pairs = 2 * m
    out_arr = np.empty(trials, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t t, pair, s, s2, live_pair, sym
    cdef int live_count
    cdef bint sender_live, verif_live, live_vetoed
    cdef double u

    with gen.bit_generator.lock:
        for t in range(trials):
            live_count = 0
            live_pair = -1
            sym = -1
            live_vetoed = False
            for pair in range(pairs):
                u = bg.next_double(bg.state)
                s = _bisect_right(pcum, u, k)
                u = bg.next_double(bg.state)
                sender_live = (u < 0.5) and (part_of[s] == pair % m)
                u = bg.next_double(bg.state)
                s2 = _bisect_right(pcum, u, k)
                u = bg.next_double(bg.state)
                verif_live = (u < 0.5) and (part_of[s2] == pair % m)
                if sender_live:
                    live_count += 1
                    live_pair = pair
                    sym = s
                    live_vetoed = verif_live
            if live_count == 1 and not live_vetoed:
                out[t] = sym
            else:
                out[t] = -1
    return out_arr


def balanced_z(const double[::1] delta, Py_ssize_t L, Py_ssize_t trials, object gen):
    cdef bitgen_t* bg = _bitgen_of(gen)
    cdef Py_ssize_t k = delta.shape[0]
    cdef Py_ssize_t per = k // L
    z_arr = np.zeros((trials, L), dtype=np.float64)
    cdef double[:, ::1] z = z_arr
    template_arr = np.repeat(np.arange(L, dtype=np.int8), per)
    cdef signed char[::1] template = template_arr
    scratch_arr = np.empty(k, dtype=np.int8)
    cdef signed char[::1] labels = scratch_arr
    cdef Py_ssize_t t, i, j, idx
    cdef signed char tmp
    cdef double u

    with gen.bit_generator.lock:
        for t in range(trials):
            for idx in range(k):
                labels[idx] = template[idx]
            for i in range(k - 1, 0, -1):
                u = bg.next_double(bg.state)
                j = <Py_ssize_t>(u * (i + 1))
                if j > i:
                    j = i
                tmp = labels[i]
                labels[i] = labels[j]
                labels[j] = tmp
            for idx in range(k):
                z[t, labels[idx]] += delta[idx]
    return z_arr
