"""Independent oracles used by the tests.

``lp_vertex_oracle`` enumerates every basic solution of the standard-form LP
behind an RMD instance and returns the optimal l1 value (or None when no
feasible basis exists).  It shares no code with the simplex backend.
"""

from itertools import combinations

import numpy as np


def rmd_standard_form(G, M, lam, l1_bound=np.inf):
    """Standard form min c'z, Az = b, z >= 0 of one RMD instance."""
    p = len(M)
    bounded = np.isfinite(l1_bound)
    m = 2 * p + (1 if bounded else 0)
    ncols = 4 * p + (1 if bounded else 0)
    A = np.zeros((m, ncols))
    A[:p, :p] = G
    A[:p, p:2 * p] = -G
    A[:p, 2 * p:3 * p] = np.eye(p)
    A[p:2 * p, :p] = -G
    A[p:2 * p, p:2 * p] = G
    A[p:2 * p, 3 * p:4 * p] = np.eye(p)
    b = np.concatenate([M + lam, lam - M])
    if bounded:
        A[2 * p, :2 * p] = 1.0
        A[2 * p, 4 * p] = 1.0
        b = np.append(b, l1_bound)
    c = np.zeros(ncols)
    c[:2 * p] = 1.0
    return A, b, c


def lp_vertex_oracle(G, M, lam, l1_bound=np.inf):
    """Brute-force optimum of the RMD LP by basic-solution enumeration."""
    A, b, c = rmd_standard_form(np.asarray(G, float), np.asarray(M, float),
                                float(lam), float(l1_bound))
    m, ncols = A.shape
    bases = np.array(list(combinations(range(ncols), m)))
    mats = A[:, bases].transpose(1, 0, 2)  # (N, m, m)
    dets = np.linalg.det(mats)
    solvable = np.abs(dets) > 1e-10
    N = len(bases)
    sols = np.zeros((N, m))
    if solvable.any():
        rhs = np.broadcast_to(b[:, None], (int(solvable.sum()), m, 1)).copy()
        sols[solvable] = np.linalg.solve(mats[solvable], rhs)[..., 0]
    exact = np.zeros(N, dtype=bool)
    if solvable.any():
        resid = np.einsum("nij,nj->ni", mats[solvable], sols[solvable]) - b
        exact[solvable] = np.all(np.abs(resid) < 1e-7, axis=1)
    feasible = solvable & exact & np.all(sols >= -1e-9, axis=1)
    if not feasible.any():
        return None
    objs = np.einsum("nj,nj->n", c[bases], sols)
    return float(objs[feasible].min())


def fd_jacobian(func, x, h=1e-5):
    """Central finite differences of a vector-valued function, (p, d)."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x))
    out = np.zeros((f0.shape[0], x.shape[0]))
    for k in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        out[:, k] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)
    return out
