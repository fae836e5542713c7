"""Pure-Python Slater-Condon matrix builder (fallback for the compiled kernel).

Both implementations share one calling convention: excitation tables are
prepared by :mod:`estimator.oracle` and the kernel returns COO triplets of the
full (both-triangle) Hamiltonian matrix.
"""

import numpy as np


def build_hamiltonian_coo(occ_a, occ_b, singles_a, singles_b, doubles_a, doubles_b,
                          h, eri, e_core, capacity):
    n_sa = occ_a.shape[0]
    n_sb = occ_b.shape[0]
    rows = np.empty(capacity, dtype=np.int64)
    cols = np.empty(capacity, dtype=np.int64)
    vals = np.empty(capacity, dtype=np.float64)
    h = h.tolist()
    eri_l = eri.tolist()
    occ_a_l = occ_a.tolist()
    occ_b_l = occ_b.tolist()
    sa_l = singles_a.tolist()
    sb_l = singles_b.tolist()
    da_l = doubles_a.tolist()
    db_l = doubles_b.tolist()
    # J[p][q] = (pp|qq), K[p][q] = (pq|qp)
    n = len(h)
    coul = [[eri_l[p][p][q][q] for q in range(n)] for p in range(n)]
    exch = [[eri_l[p][q][q][p] for q in range(n)] for p in range(n)]

    nnz = 0
    for ia in range(n_sa):
        oa = occ_a_l[ia]
        for ib in range(n_sb):
            ob = occ_b_l[ib]
            row = ia * n_sb + ib

            e = e_core
            for p in oa:
                e += h[p][p]
                for q in oa:
                    e += 0.5 * (coul[p][q] - exch[p][q])
                for q in ob:
                    e += coul[p][q]
            for p in ob:
                e += h[p][p]
                for q in ob:
                    e += 0.5 * (coul[p][q] - exch[p][q])
            rows[nnz] = row
            cols[nnz] = row
            vals[nnz] = e
            nnz += 1

            for i, a, ja, sg in sa_l[ia]:
                ai = eri_l[a][i]
                v = h[a][i]
                for k in oa:
                    v += ai[k][k] - eri_l[a][k][k][i]
                for k in ob:
                    v += ai[k][k]
                rows[nnz] = row
                cols[nnz] = ja * n_sb + ib
                vals[nnz] = sg * v
                nnz += 1

            for j, b, jb, sg in sb_l[ib]:
                bj = eri_l[b][j]
                v = h[b][j]
                for k in ob:
                    v += bj[k][k] - eri_l[b][k][k][j]
                for k in oa:
                    v += bj[k][k]
                rows[nnz] = row
                cols[nnz] = ia * n_sb + jb
                vals[nnz] = sg * v
                nnz += 1

            for i, j, a, b, ja, sg in da_l[ia]:
                rows[nnz] = row
                cols[nnz] = ja * n_sb + ib
                vals[nnz] = sg * (eri_l[a][i][b][j] - eri_l[a][j][b][i])
                nnz += 1

            for i, j, a, b, jb, sg in db_l[ib]:
                rows[nnz] = row
                cols[nnz] = ia * n_sb + jb
                vals[nnz] = sg * (eri_l[a][i][b][j] - eri_l[a][j][b][i])
                nnz += 1

            for i, a, ja, sga in sa_l[ia]:
                ai = eri_l[a][i]
                for j, b, jb, sgb in sb_l[ib]:
                    rows[nnz] = row
                    cols[nnz] = ja * n_sb + jb
                    vals[nnz] = sga * sgb * ai[b][j]
                    nnz += 1

    return rows[:nnz], cols[:nnz], vals[:nnz]
