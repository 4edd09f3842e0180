"""Independent oracles for test expectations.

Everything here is deliberately written against the library's solver paths:
plain grids, enumeration, finite differences, and closed qubit formulas.
Oracles never call the package's optimizers.
"""

from __future__ import annotations

import math

import numpy as np

LN2 = math.log(2.0)

PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}


def classical_kl_direct(p, q) -> float:
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0:
            if qi <= 0.0:
                return math.inf
            total += pi * math.log(pi / qi)
    return total / LN2


def classical_renyi_direct(p, q, alpha) -> float:
    s = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0 and qi > 0.0:
            s += pi ** alpha * qi ** (1.0 - alpha)
        elif pi > 0.0 and alpha > 1.0:
            return math.inf
    if s <= 0.0:
        return math.inf
    return math.log(s) / ((alpha - 1.0) * LN2)


def np_diagonal_enumeration(p, q, eps) -> tuple[float, np.ndarray]:
    """Classical Neyman-Pearson by likelihood-ratio ordering of diagonal tests."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    ratios = np.where(q > 0, p / np.where(q > 0, q, 1.0), math.inf)
    order = np.argsort(-ratios)
    m = np.zeros_like(p)
    need = 1.0 - eps
    acc = 0.0
    for idx in order:
        if acc >= need - 1e-15:
            break
        take = min(1.0, (need - acc) / p[idx]) if p[idx] > 0 else 1.0
        m[idx] = take
        acc += take * p[idx]
    beta = float((q * m).sum())
    return beta, m


def finite_diff_matfunc(h, f, direction, step=1e-5):
    """Central finite difference of the matrix function along a direction."""
    def mf(x):
        w, v = np.linalg.eigh((x + x.conj().T) / 2)
        return (v * f(w)) @ v.conj().T
    return (mf(h + step * direction) - mf(h - step * direction)) / (2 * step)


def two_step_partial_trace(a, dims, keep):
    """Iterated single-subsystem tracing, one subsystem at a time."""
    dims = list(dims)
    a = np.asarray(a, dtype=complex)
    cur = a
    traced = [i for i in range(len(dims)) if i not in keep]
    for t in sorted(traced, reverse=True):
        n = len(dims)
        tens = cur.reshape(dims + dims)
        tens = np.trace(tens, axis1=t, axis2=n + t)
        dims.pop(t)
        cur = tens.reshape(int(np.prod(dims)), int(np.prod(dims)))
    return cur


# ---------------------------------------------------------------------------
# Qubit closed forms (Bloch picture)
# ---------------------------------------------------------------------------

def bloch_to_mat(u):
    u = np.asarray(u, dtype=float)
    return 0.5 * (np.eye(2, dtype=complex) + u[0] * PAULI["x"] + u[1] * PAULI["y"] + u[2] * PAULI["z"])


def mat_to_bloch(m):
    return np.array([np.trace(m @ PAULI[k]).real for k in ("x", "y", "z")])


def qubit_umegaki_bloch(u, v) -> float:
    """D(rho_u || rho_v) in bits from Bloch vectors, closed form."""
    ru, rv = np.linalg.norm(u), np.linalg.norm(v)
    ru = min(ru, 1.0)
    rv = min(rv, 1.0)

    def h2(r):
        out = 0.0
        for lam in ((1 + r) / 2, (1 - r) / 2):
            if lam > 0:
                out -= lam * math.log(lam)
        return out

    if rv >= 1.0 - 1e-14:
        aligned = ru >= 1.0 - 1e-14 and np.dot(u, v) >= ru * rv - 1e-12
        return 0.0 if aligned else math.inf
    mu0 = 0.5 * math.log((1 - rv * rv) / 4.0)
    mu1 = 0.5 * math.log((1 + rv) / (1 - rv)) if rv > 0 else 0.0
    dot = float(np.dot(u, v) / rv) if rv > 0 else 0.0
    return (-h2(ru) - mu0 - mu1 * dot) / LN2


def _ball_grid(step):
    axis = np.arange(-1.0, 1.0 + step / 2, step)
    pts = np.array(np.meshgrid(axis, axis, axis)).reshape(3, -1).T
    return pts[np.linalg.norm(pts, axis=1) <= 1.0 + 1e-12]


def _channel_bloch_map(channel_apply):
    """Affine Bloch action (matrix, offset) of a qubit channel."""
    t0 = mat_to_bloch(channel_apply(bloch_to_mat([0, 0, 0])))
    cols = []
    for e in np.eye(3):
        cols.append(mat_to_bloch(channel_apply(bloch_to_mat(e))) - t0)
    return np.array(cols).T, t0


def _umegaki_grid_values(us, vs):
    """Vectorized D(u||v) in bits for all pairs of Bloch-vector grids."""
    ru = np.minimum(np.linalg.norm(us, axis=1), 1.0 - 1e-12)
    rv = np.minimum(np.linalg.norm(vs, axis=1), 1.0 - 1e-9)
    lam_u = np.stack([(1 + ru) / 2, (1 - ru) / 2])
    h_u = -(np.where(lam_u > 0, lam_u * np.log(lam_u), 0.0)).sum(axis=0)
    mu0 = 0.5 * np.log((1 - rv * rv) / 4.0)
    mu1 = np.where(rv > 0, 0.5 * np.log((1 + rv) / np.maximum(1 - rv, 1e-300)), 0.0)
    vhat = vs / np.maximum(rv, 1e-300)[:, None]
    dots = us @ vhat.T
    vals = (-h_u[:, None] - mu0[None, :] - mu1[None, :] * dots) / LN2
    return vals


def qubit_min_output_umegaki_grid(apply_n, apply_m, coarse=0.1, refine=(0.02, 0.002)) -> float:
    """Hierarchical Bloch-ball grid minimization of D(N(rho) || M(sigma)).

    Joint convexity of the objective makes coarse-to-fine refinement sound:
    there is a single basin, so the coarse argmin localizes the optimum.
    """
    mat_n, off_n = _channel_bloch_map(apply_n)
    mat_m, off_m = _channel_bloch_map(apply_m)

    def stage(centers_u, centers_v, step):
        axis = np.arange(-step * 5, step * 5 + step / 2, step)
        local = np.array(np.meshgrid(axis, axis, axis)).reshape(3, -1).T
        us = centers_u[None, :] + local
        vs = centers_v[None, :] + local
        us = us[np.linalg.norm(us, axis=1) <= 1.0]
        vs = vs[np.linalg.norm(vs, axis=1) <= 1.0]
        return us, vs

    grid = _ball_grid(coarse)
    img_u = grid @ mat_n.T + off_n
    img_v = grid @ mat_m.T + off_m
    vals = _umegaki_grid_values(img_u, img_v)
    best = np.unravel_index(np.argmin(vals), vals.shape)
    best_val = vals[best]
    cu, cv = grid[best[0]], grid[best[1]]
    for step in refine:
        us, vs = stage(cu, cv, step)
        img_u = us @ mat_n.T + off_n
        img_v = vs @ mat_m.T + off_m
        vals = _umegaki_grid_values(img_u, img_v)
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        best_val = min(best_val, vals[idx])
        cu, cv = us[idx[0]], vs[idx[1]]
    return float(best_val)


def sphere_grid(n_points):
    """Fibonacci point set on the unit sphere."""
    k = np.arange(n_points) + 0.5
    phi = np.arccos(1 - 2 * k / n_points)
    theta = math.pi * (1 + 5 ** 0.5) * k
    return np.stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)]).T


def qubit_measured_grid(rho, sigma, alpha=None, n_dirs=4000, refine_rounds=2) -> float:
    """Measured divergence of a qubit pair by measurement-direction search."""
    u = mat_to_bloch(np.asarray(rho))
    v = mat_to_bloch(np.asarray(sigma))

    def value(dirs):
        pu = (1 + dirs @ u) / 2
        qv = (1 + dirs @ v) / 2
        p = np.stack([pu, 1 - pu])
        q = np.stack([qv, 1 - qv])
        with np.errstate(all="ignore"):
            if alpha is None:
                terms = np.where(p > 0, p * np.log(np.maximum(p, 1e-300) / np.maximum(q, 1e-300)), 0.0)
                vals = terms.sum(axis=0) / LN2
            else:
                s = (p ** alpha * np.maximum(q, 1e-300) ** (1 - alpha)).sum(axis=0)
                vals = np.log(np.maximum(s, 1e-300)) / ((alpha - 1) * LN2)
        return vals

    dirs = sphere_grid(n_dirs)
    vals = value(dirs)
    best = float(np.nanmax(vals))
    center = dirs[int(np.nanargmax(vals))]
    scale = 0.15
    for _ in range(refine_rounds):
        local = center[None, :] + scale * np.random.default_rng(0).standard_normal((2000, 3))
        local /= np.linalg.norm(local, axis=1)[:, None]
        vals = value(local)
        if np.nanmax(vals) > best:
            best = float(np.nanmax(vals))
            center = local[int(np.nanargmax(vals))]
        scale /= 5.0
    return best


def qubit_measured_min_output_grid(apply_n, apply_m, same_input=False,
                                   coarse=0.14, n_dirs=1200) -> float:
    """Joint grid oracle for the measured channel divergence of qubit channels.

    Minimizes over Bloch grids of inputs the measurement-direction supremum;
    two local refinement rounds around the incumbent follow the coarse scan.
    The outer objective is jointly convex, so one basin suffices.
    """
    mat_n, off_n = _channel_bloch_map(apply_n)
    mat_m, off_m = _channel_bloch_map(apply_m)
    dirs = sphere_grid(n_dirs)

    def sup_vals(img_u, img_v):
        pu = (1 + img_u @ dirs.T) / 2       # (nu, ndirs)
        qv = (1 + img_v @ dirs.T) / 2       # (nv, ndirs)
        best = np.full((pu.shape[0], qv.shape[0]), -np.inf)
        with np.errstate(all="ignore"):
            for d in range(dirs.shape[0]):
                p1 = pu[:, d][:, None]
                q1 = np.maximum(qv[:, d][None, :], 1e-300)
                t1 = np.where(p1 > 0, p1 * np.log(np.maximum(p1, 1e-300) / q1), 0.0)
                p2 = 1 - p1
                q2 = np.maximum(1 - qv[:, d][None, :], 1e-300)
                t2 = np.where(p2 > 0, p2 * np.log(np.maximum(p2, 1e-300) / q2), 0.0)
                np.maximum(best, (t1 + t2) / LN2, out=best)
        return best

    def scan(centers_u, centers_v, step, width=5):
        axis = np.arange(-step * width, step * width + step / 2, step)
        local = np.array(np.meshgrid(axis, axis, axis)).reshape(3, -1).T
        us = centers_u[None, :] + local
        us = us[np.linalg.norm(us, axis=1) <= 1.0]
        vs = centers_v[None, :] + local
        vs = vs[np.linalg.norm(vs, axis=1) <= 1.0]
        return us, vs

    def fine_value(u, v):
        return qubit_measured_grid(bloch_to_mat(u @ mat_n.T + off_n),
                                   bloch_to_mat(v @ mat_m.T + off_m))

    grid = _ball_grid(coarse)
    if same_input:
        img_u = grid @ mat_n.T + off_n
        img_v = grid @ mat_m.T + off_m
        sup = sup_vals(img_u, img_v)
        diag = np.diag(sup)
        i = int(np.argmin(diag))
        best_val, cu = float(diag[i]), grid[i]
        for step in (coarse / 5, coarse / 25):
            us, _ = scan(cu, cu, step)
            sup = sup_vals(us @ mat_n.T + off_n, us @ mat_m.T + off_m)
            diag = np.diag(sup)
            i = int(np.argmin(diag))
            if diag[i] < best_val:
                best_val, cu = float(diag[i]), us[i]
        # re-evaluate the incumbent with a high-resolution measurement search
        return fine_value(cu, cu)
    img_u = grid @ mat_n.T + off_n
    img_v = grid @ mat_m.T + off_m
    sup = sup_vals(img_u, img_v)
    i, j = np.unravel_index(np.argmin(sup), sup.shape)
    best_val, cu, cv = float(sup[i, j]), grid[i], grid[j]
    for step in (coarse / 5, coarse / 25):
        us, vs = scan(cu, cv, step)
        sup = sup_vals(us @ mat_n.T + off_n, vs @ mat_m.T + off_m)
        i, j = np.unravel_index(np.argmin(sup), sup.shape)
        if sup[i, j] < best_val:
            best_val, cu, cv = float(sup[i, j]), us[i], vs[j]
    return fine_value(cu, cv)


def haar_isometry_channel(d_in, d_out, kraus_rank, seed):
    """Random CPTP map from a Haar-ish isometry, as plain Kraus arrays."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d_out * kraus_rank, d_in)) + 1j * rng.standard_normal((d_out * kraus_rank, d_in))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return [q[i * d_out:(i + 1) * d_out, :] for i in range(kraus_rank)]
