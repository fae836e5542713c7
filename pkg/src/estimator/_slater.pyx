# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Slater-Condon matrix builder; same contract as ``_slater_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def build_hamiltonian_coo(const long long[:, ::1] occ_a, const long long[:, ::1] occ_b,
                          const long long[:, :, ::1] singles_a, const long long[:, :, ::1] singles_b,
                          const long long[:, :, ::1] doubles_a, const long long[:, :, ::1] doubles_b,
                          const double[:, ::1] h, const double[:, :, :, ::1] eri,
                          double e_core, Py_ssize_t capacity):
    cdef Py_ssize_t n_sa = occ_a.shape[0], n_sb = occ_b.shape[0]
    cdef Py_ssize_t na = occ_a.shape[1], nb = occ_b.shape[1]
    cdef Py_ssize_t nsa = singles_a.shape[1], nsb = singles_b.shape[1]
    cdef Py_ssize_t nda = doubles_a.shape[1], ndb = doubles_b.shape[1]
    cdef Py_ssize_t n = h.shape[0]

    rows_arr = np.empty(capacity, dtype=np.int64)
    cols_arr = np.empty(capacity, dtype=np.int64)
    vals_arr = np.empty(capacity, dtype=np.float64)
    cdef long long[::1] rows = rows_arr
    cdef long long[::1] cols = cols_arr
    cdef double[::1] vals = vals_arr

    coul_arr = np.empty((n, n))
    exch_arr = np.empty((n, n))
    cdef double[:, ::1] coul = coul_arr
    cdef double[:, ::1] exch = exch_arr
    cdef Py_ssize_t p, q, k, x, y
    for p in range(n):
        for q in range(n):
            coul[p, q] = eri[p, p, q, q]
            exch[p, q] = eri[p, q, q, p]

    cdef Py_ssize_t ia, ib, row, nnz = 0
    cdef long long i, j, a, b, ja, jb
    cdef double e, v, sg, sgb

    with nogil:
        for ia in range(n_sa):
            for ib in range(n_sb):
                row = ia * n_sb + ib

                e = e_core
                for x in range(na):
                    p = occ_a[ia, x]
                    e += h[p, p]
                    for y in range(na):
                        q = occ_a[ia, y]
                        e += 0.5 * (coul[p, q] - exch[p, q])
                    for y in range(nb):
                        e += coul[p, occ_b[ib, y]]
                for x in range(nb):
                    p = occ_b[ib, x]
                    e += h[p, p]
                    for y in range(nb):
                        q = occ_b[ib, y]
                        e += 0.5 * (coul[p, q] - exch[p, q])
                rows[nnz] = row
                cols[nnz] = row
                vals[nnz] = e
                nnz += 1

                for x in range(nsa):
                    i = singles_a[ia, x, 0]
                    a = singles_a[ia, x, 1]
                    ja = singles_a[ia, x, 2]
                    sg = <double>singles_a[ia, x, 3]
                    v = h[a, i]
                    for y in range(na):
                        k = occ_a[ia, y]
                        v += eri[a, i, k, k] - eri[a, k, k, i]
                    for y in range(nb):
                        k = occ_b[ib, y]
                        v += eri[a, i, k, k]
                    rows[nnz] = row
                    cols[nnz] = ja * n_sb + ib
                    vals[nnz] = sg * v
                    nnz += 1

                for x in range(nsb):
                    j = singles_b[ib, x, 0]
                    b = singles_b[ib, x, 1]
                    jb = singles_b[ib, x, 2]
                    sg = <double>singles_b[ib, x, 3]
                    v = h[b, j]
                    for y in range(nb):
                        k = occ_b[ib, y]
                        v += eri[b, j, k, k] - eri[b, k, k, j]
                    for y in range(na):
                        k = occ_a[ia, y]
                        v += eri[b, j, k, k]
                    rows[nnz] = row
                    cols[nnz] = ia * n_sb + jb
                    vals[nnz] = sg * v
                    nnz += 1

                for x in range(nda):
                    i = doubles_a[ia, x, 0]
                    j = doubles_a[ia, x, 1]
                    a = doubles_a[ia, x, 2]
                    b = doubles_a[ia, x, 3]
                    rows[nnz] = row
                    cols[nnz] = doubles_a[ia, x, 4] * n_sb + ib
                    vals[nnz] = doubles_a[ia, x, 5] * (eri[a, i, b, j] - eri[a, j, b, i])
                    nnz += 1

                for x in range(ndb):
                    i = doubles_b[ib, x, 0]
                    j = doubles_b[ib, x, 1]
                    a = doubles_b[ib, x, 2]
                    b = doubles_b[ib, x, 3]
                    rows[nnz] = row
                    cols[nnz] = ia * n_sb + doubles_b[ib, x, 4]
                    vals[nnz] = doubles_b[ib, x, 5] * (eri[a, i, b, j] - eri[a, j, b, i])
                    nnz += 1

                for x in range(nsa):
                    i = singles_a[ia, x, 0]
                    a = singles_a[ia, x, 1]
                    ja = singles_a[ia, x, 2]
                    sg = <double>singles_a[ia, x, 3]
                    for y in range(nsb):
                        j = singles_b[ib, y, 0]
                        b = singles_b[ib, y, 1]
                        jb = singles_b[ib, y, 2]
                        sgb = <double>singles_b[ib, y, 3]
                        rows[nnz] = row
                        cols[nnz] = ja * n_sb + jb
                        vals[nnz] = sg * sgb * eri[a, i, b, j]
                        nnz += 1

    return rows_arr[:nnz], cols_arr[:nnz], vals_arr[:nnz]
