"""Independent reference for the Re = 100 lid-driven square cavity.

Second-order finite differences for the streamfunction-vorticity form on
uniform grids, Thom's wall-vorticity formula, and Richardson extrapolation
of the centerline velocity extrema. Run as a script to regenerate the frozen
numbers used by the tests; it shares no code with the package.
"""

import sys

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def solve(n, re=100.0, tol=1e-10, relax=1.0, max_iter=500, verbose=False):
    """Picard iteration on the coupled (psi, omega) system with the
    advecting velocity frozen; Thom's formula closes the wall vorticity."""
    h = 1.0 / n
    N = n + 1
    idx = np.arange(N * N).reshape(N, N)      # [i, j] -> (x_i, y_j)
    P, W = 0, N * N                           # offsets of psi and omega
    wall = np.zeros((N, N), bool)
    wall[0, :] = wall[-1, :] = wall[:, 0] = wall[:, -1] = True
    ii, jj = np.nonzero(~wall)
    k = idx[ii, jj]
    # static rows: Poisson for psi, psi = 0 on walls, Thom on walls
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.atleast_1d(r))
        cols.append(np.atleast_1d(c))
        vals.append(np.broadcast_to(v, np.shape(np.atleast_1d(r))).astype(float))

    # -lap(psi) - omega = 0
    add(P + k, P + k, 4 / h**2)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        add(P + k, P + idx[ii + di, jj + dj], -1 / h**2)
    add(P + k, W + k, -1.0)
    wi, wj = np.nonzero(wall)
    kw = idx[wi, wj]
    add(P + kw, P + kw, 1.0)
    rhs = np.zeros(2 * N * N)
    # Thom: omega_w + 2 psi_adj / h^2 = -2 U_w / h (lid only), corners: omega = 0
    for sel, di, dj in ((wi == 0, 1, 0), (wi == n, -1, 0), (wj == 0, 0, 1), (wj == n, 0, -1)):
        inner = sel & (wi > 0) & (wi < n) if dj else sel & (wj > 0) & (wj < n)
        r = idx[wi[inner], wj[inner]]
        add(W + r, W + r, 1.0)
        add(W + r, P + idx[wi[inner] + di, wj[inner] + dj], 2 / h**2)
        if dj == -1:
            rhs[W + r] = -2.0 / h
    corners = idx[[0, 0, n, n], [0, n, 0, n]]
    add(W + corners, W + corners, 1.0)
    static = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(2 * N * N, 2 * N * N))
    x = np.zeros(2 * N * N)
    best, since = np.inf, 0
    for it in range(max_iter):
        psi = x[:N * N].reshape(N, N)
        u = (psi[ii, jj + 1] - psi[ii, jj - 1]) / (2 * h)
        v = -(psi[ii + 1, jj] - psi[ii - 1, jj]) / (2 * h)
        r2, c2, v2 = [], [], []
        r2.append(W + k); c2.append(W + k); v2.append(np.full(len(k), 4 / (re * h**2)))
        for di, dj, vel in ((1, 0, u), (-1, 0, -u), (0, 1, v), (0, -1, -v)):
            r2.append(W + k)
            c2.append(W + idx[ii + di, jj + dj])
            v2.append(vel / (2 * h) - 1 / (re * h**2))
        A = static + sp.csr_matrix((np.concatenate(v2), (np.concatenate(r2), np.concatenate(c2))),
                                   shape=static.shape)
        x_new = spla.spsolve(A.tocsc(), rhs)
        change = np.abs(x_new - x).max()
        x = (1 - relax) * x + relax * x_new
        if verbose:
            print(it, change)
        scale = np.abs(x_new).max()
        if change < tol * scale:
            break
        # round-off floor: small and no longer improving
        best, since = (change, 0) if change < best else (best, since + 1)
        if best < 1e-8 * scale and since >= 10:
            break
    return x[:N * N].reshape(N, N), h, it


def extremum(z, f, kind):
    """Extremum of a sampled profile by a parabola through the best sample."""
    k = np.argmin(f) if kind == "min" else np.argmax(f)
    zs, fs = z[k - 1:k + 2], f[k - 1:k + 2]
    c = np.polyfit(zs, fs, 2)
    zc = -c[1] / (2 * c[0])
    return float(np.polyval(c, zc)), float(zc)


def centerline(n):
    psi, h, it = solve(n)
    c = n // 2
    y = np.linspace(0, 1, n + 1)
    u = np.zeros(n + 1)
    u[1:-1] = (psi[c, 2:] - psi[c, :-2]) / (2 * h)
    u[-1] = 1.0
    v = np.zeros(n + 1)
    v[1:-1] = -(psi[2:, c] - psi[:-2, c]) / (2 * h)
    return {"u_min": extremum(y, u, "min"), "v_max": extremum(y, v, "max"),
            "v_min": extremum(y, v, "min"), "iterations": it}


if __name__ == "__main__":
    grids = [int(a) for a in sys.argv[1:]] or [64, 128]
    res = {}
    for n in grids:
        res[n] = centerline(n)
        print(n, res[n], flush=True)
    for key in ("u_min", "v_max", "v_min"):
        f1, f2 = res[grids[-2]][key][0], res[grids[-1]][key][0]
        print(key, "richardson", f2 + (f2 - f1) / 3.0)
