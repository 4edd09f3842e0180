"""Solvers over products of density-operator sets.

The driver is Frank-Wolfe (conditional gradient): the linear minimization
oracle over a density spectrahedron is an extreme eigenvector of the
gradient, steps use exact golden-section line search, and the FW gap is the
optimality certificate. A quasi-Newton polish on the smooth surjective
parameterization rho = T T* / tr(T T*) accelerates the tail; the certificate
is always re-evaluated as a genuine FW gap at the returned point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import linalg as la

__all__ = ["DensityProgram", "solve_density_program", "golden_section", "project_simplex_eigs"]

BIG = 1e30


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                   max_iter: int = 200) -> tuple[float, float]:
    """Minimize a unimodal scalar function on [a, b]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        it += 1
    x = 0.5 * (a + b)
    return x, f(x)


def project_simplex_eigs(h: np.ndarray) -> np.ndarray:
    """Euclidean projection of a Hermitian matrix onto the density set."""
    w, v = np.linalg.eigh(la.hermitian_part(h))
    # project eigenvalues onto the probability simplex (Held et al.)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, w.size + 1)
    cond = u - css / idx > 0
    k = idx[cond][-1]
    tau = css[k - 1] / k
    w_proj = np.maximum(w - tau, 0.0)
    return (v * w_proj) @ v.conj().T


@dataclass
class DensityProgram:
    """Result bundle for a density-variable convex program."""

    mats: list[np.ndarray]
    value: float
    fw_gap: float
    converged: bool
    n_iter: int


def _vertices_and_gap(grads: Sequence[np.ndarray], mats: Sequence[np.ndarray], sense: int):
    """Extreme points of the linearized problem and the FW gap (always >= 0)."""
    verts, gap = [], 0.0
    for g, x in zip(grads, mats):
        w, v = np.linalg.eigh(la.hermitian_part(g))
        col = v[:, 0] if sense > 0 else v[:, -1]
        vert = np.outer(col, col.conj())
        verts.append(vert)
        gap += sense * float(np.real(np.trace(g @ (x - vert))))
    return verts, gap


def _tt_polish(value_and_grad, mats, sense: int, maxiter: int = 250):
    """L-BFGS on the parameterization rho_i = T_i T_i* / tr, warm-started."""
    dims = [m.shape[0] for m in mats]
    sizes = [2 * d * d for d in dims]
    offsets = np.cumsum([0] + sizes)

    def pack(ts):
        return np.concatenate([np.concatenate([t.real.ravel(), t.imag.ravel()]) for t in ts])

    def unpack(x):
        ts = []
        for i, d in enumerate(dims):
            seg = x[offsets[i]:offsets[i + 1]]
            ts.append(seg[:d * d].reshape(d, d) + 1j * seg[d * d:].reshape(d, d))
        return ts

    def fun(x):
        ts = unpack(x)
        mats_x, traces = [], []
        for t in ts:
            tt = t @ t.conj().T
            s = float(np.trace(tt).real)
            if s <= 1e-300:
                return BIG, np.zeros_like(x)
            mats_x.append(tt / s)
            traces.append(s)
        f, grads = value_and_grad(mats_x)
        f = sense * f
        if not math.isfinite(f):
            return BIG, np.zeros_like(x)
        gvecs = []
        for t, s, g, rho in zip(ts, traces, grads, mats_x):
            g = sense * g
            a = g - float(np.real(np.trace(g @ rho))) * np.eye(t.shape[0])
            gt = (2.0 / s) * (la.hermitian_part(a) @ t)
            gvecs.append(np.concatenate([gt.real.ravel(), gt.imag.ravel()]))
        return f, np.concatenate(gvecs)

    # start at a full-rank square root; a tiny floor keeps T invertible
    ts0 = []
    for m in mats:
        w, v = np.linalg.eigh(la.hermitian_part(m))
        w = np.maximum(w, 1e-12)
        ts0.append(v * np.sqrt(w))
    res = minimize(fun, pack(ts0), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "ftol": 1e-16, "gtol": 1e-12})
    ts = unpack(res.x)
    out = []
    for t in ts:
        tt = t @ t.conj().T
        out.append(tt / float(np.trace(tt).real))
    return out


def solve_density_program(
    value_and_grad: Callable[[Sequence[np.ndarray]], tuple[float, list[np.ndarray]]],
    dims: Sequence[int],
    sense: str = "min",
    tol: float = 1e-6,
    max_iter: int = 5000,
    restarts: int = 4,
    seed: int = 0,
    polish_every: int = 60,
    line_tol: float = 1e-10,
    init: Sequence[np.ndarray] | None = None,
) -> DensityProgram:
    """Optimize a smooth (jointly convex or concave) objective over densities.

    ``value_and_grad(mats)`` returns the objective and the list of Euclidean
    gradients (Hermitian, one per variable). ``sense`` is "min" or "max".
    Terminates when the FW gap drops below ``tol``; non-convergence is
    reported through ``converged`` rather than raised, since the achieved
    point still bounds the optimum on the certified side.
    """
    sgn = 1 if sense == "min" else -1
    rng = np.random.default_rng(seed)
    inits: list[list[np.ndarray]] = []
    if init is not None:
        inits.append([np.asarray(m, dtype=complex) for m in init])
    inits.append([np.eye(d, dtype=complex) / d for d in dims])
    for _ in range(restarts):
        inits.append([la.random_density(d, rng.integers(2**31)) for d in dims])

    best: DensityProgram | None = None
    for mats0 in inits:
        mats = [m.copy() for m in mats0]
        f, grads = value_and_grad(mats)
        n_iter = 0
        gap = math.inf
        stall = 0
        escapes = 0
        while n_iter < max_iter:
            if not math.isfinite(f):
                # escape an infinite-value start by mixing toward the barycenter
                escapes += 1
                if escapes > 3:
                    break
                mats = [0.5 * m + 0.5 * np.eye(m.shape[0]) / m.shape[0] for m in mats]
                f, grads = value_and_grad(mats)
                n_iter += 1
                continue
            verts, gap = _vertices_and_gap(grads, mats, sgn)
            if gap <= tol:
                break
            if polish_every and n_iter and n_iter % polish_every == 0:
                polished = _tt_polish(value_and_grad, mats, sgn)
                fp, gp = value_and_grad(polished)
                if math.isfinite(fp) and sgn * fp < sgn * f - 1e-15:
                    mats, f, grads = polished, fp, gp
                    stall = 0
                    n_iter += 1
                    continue
                stall += 1
                if stall >= 2:
                    break

            def phi(t):
                trial = [(1 - t) * m + t * v for m, v in zip(mats, verts)]
                val = value_and_grad(trial)[0]
                return sgn * val if math.isfinite(val) else BIG

            t_star, _ = golden_section(phi, 0.0, 1.0, tol=line_tol)
            if t_star <= 0.0:
                t_star = min(2.0 / (n_iter + 2.0), 1e-3)
            mats = [(1 - t_star) * m + t_star * v for m, v in zip(mats, verts)]
            f, grads = value_and_grad(mats)
            n_iter += 1

        if math.isfinite(f):
            # final polish + certificate at the returned point
            polished = _tt_polish(value_and_grad, mats, sgn)
            fp, gp = value_and_grad(polished)
            if math.isfinite(fp) and sgn * fp <= sgn * f:
                mats, f, grads = polished, fp, gp
            verts, gap = _vertices_and_gap(grads, mats, sgn)
        cand = DensityProgram([la.project_to_density(m) for m in mats], float(f),
                              float(gap), bool(gap <= tol), n_iter)
        if best is None or sgn * cand.value < sgn * best.value:
            best = cand
        if best.converged:
            break
    return best
