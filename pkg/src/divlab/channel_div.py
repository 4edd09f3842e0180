"""Minimum output channel divergences and chain-rule machinery.

``min_output`` minimizes D(N(rho) || M(sigma)) over independent input states
with Frank-Wolfe over the product of two density spectrahedra (or maximizes
the jointly concave trace functional for Renyi orders below one, which is the
equivalent convex program). Related solvers cover the measured saddle, the
max-relative-entropy bisection, fidelity maximization, regularization
brackets for the per-copy limit, and chain-rule margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import divergences as dv
from . import linalg as la
from .config import GRAD_SMOOTHING, LN2, TOL_RANK
from .errors import ValidationError
from .optimize import solve_density_program
from .qobjects import QuantumMap, adjoint_apply, apply_map, as_matrix, tensor_power_map

__all__ = [
    "MinOutputResult",
    "RegularizationBracket",
    "min_output",
    "min_output_same_input",
    "min_output_measured",
    "dmax_min_output",
    "fidelity_min_output",
    "regularization_bracket",
    "chain_rule_margin",
    "image_support_function",
    "amortized_gap_search",
]


@dataclass
class MinOutputResult:
    value: float                      # bits
    rho_star: np.ndarray
    sigma_star: np.ndarray
    fw_gap: float
    n_copies: int = 1
    converged: bool = True
    family: str = "umegaki"
    alpha: Optional[float] = None
    extras: dict = field(default_factory=dict)


@dataclass
class RegularizationBracket:
    lower: float
    upper: float
    per_n: list
    family: str = "umegaki"
    alpha: float = 1.0


def _power_maps(n_ch: QuantumMap, m_ch: QuantumMap, n: int) -> tuple[QuantumMap, QuantumMap]:
    if n_ch.in_dim != m_ch.in_dim or n_ch.out_dim != m_ch.out_dim:
        raise ValidationError("the two channels must share input and output dimensions")
    if n == 1:
        return n_ch, m_ch
    return tensor_power_map(n_ch, n), tensor_power_map(m_ch, n)


def _smooth_if_deficient(mat: np.ndarray) -> np.ndarray:
    d = mat.shape[0]
    if la.min_eig(mat) < TOL_RANK * max(la.max_eig(mat), 0.0) + 1e-300:
        tr = max(float(np.trace(mat).real), 1e-300)
        return (1.0 - GRAD_SMOOTHING) * mat + GRAD_SMOOTHING * (tr / d) * np.eye(d)
    return mat


def _umegaki_nats(a: np.ndarray, b: np.ndarray) -> float:
    if dv._support_violated(a, b):
        return math.inf
    la_ = la.mat_log(a, support_only=True)
    lb = la.mat_log(b, support_only=True)
    return float(np.real(np.trace(a @ (la_ - lb))))


def _objective(n_map: QuantumMap, m_map: QuantumMap, family: str, alpha: Optional[float]):
    """Build (value_and_grad, sense, to_bits) for the smooth divergence families.

    value_and_grad works in natural-log units (or directly on the trace
    functional Q for Renyi orders below one, which is then maximized).
    """
    if family == "umegaki" or (family in ("sandwiched", "petz") and alpha == 1.0):
        def vg(mats):
            rho, sigma = mats
            a = n_map(rho)
            b = m_map(sigma)
            val = _umegaki_nats(a, b)
            ag = _smooth_if_deficient(a)
            bg = _smooth_if_deficient(b)
            wa, va = np.linalg.eigh(la.hermitian_part(ag))
            wb, vb = np.linalg.eigh(la.hermitian_part(bg))
            log_a = (va * np.log(np.maximum(wa, 1e-300))) @ va.conj().T
            log_b = (vb * np.log(np.maximum(wb, 1e-300))) @ vb.conj().T
            g_rho = adjoint_apply(n_map, log_a - log_b + np.eye(a.shape[0]))
            mult = la.frechet_multiplier(np.maximum(wb, 1e-300), vb, np.log, lambda x: 1.0 / x)
            g_sigma = -adjoint_apply(m_map, mult(ag))
            return val, [la.hermitian_part(g_rho), la.hermitian_part(g_sigma)]

        return vg, "min", lambda v: v / LN2, lambda g, v: g / LN2

    if family == "sandwiched":
        gamma = (1.0 - alpha) / (2.0 * alpha)

        def q_and_grads(rho, sigma):
            a = n_map(rho)
            b = m_map(sigma)
            bg = _smooth_if_deficient(b)
            ag = a if alpha < 1.0 else _smooth_if_deficient(a)
            wb, vb = np.linalg.eigh(la.hermitian_part(bg))
            wb = np.maximum(wb, 1e-300)
            b_gam = (vb * wb ** gamma) @ vb.conj().T
            core = la.hermitian_part(b_gam @ ag @ b_gam)
            wc, vc = np.linalg.eigh(core)
            wc = np.maximum(wc, 0.0)
            q = float((wc ** alpha).sum())
            wc_floor = np.maximum(wc, 1e-300)
            core_pow = (vc * wc_floor ** (alpha - 1.0)) @ vc.conj().T
            g_a = alpha * la.hermitian_part(b_gam @ core_pow @ b_gam)
            w_mid = alpha * (ag @ b_gam @ core_pow + core_pow @ b_gam @ ag)
            mult = la.frechet_multiplier(wb, vb, lambda x: x ** gamma,
                                         lambda x: gamma * x ** (gamma - 1.0))
            g_b = la.hermitian_part(mult(la.hermitian_part(w_mid)))
            return q, adjoint_apply(n_map, g_a), adjoint_apply(m_map, g_b)

        if alpha < 1.0:
            def vg(mats):
                q, g_r, g_s = q_and_grads(*mats)
                return q, [la.hermitian_part(g_r), la.hermitian_part(g_s)]

            return vg, "max", lambda q: math.inf if q <= 0 else math.log(q) / ((alpha - 1.0) * LN2), \
                lambda g, q: g / (abs(alpha - 1.0) * max(q, 1e-300) * LN2)

        def vg(mats):
            rho, sigma = mats
            a = n_map(rho)
            b = m_map(sigma)
            if dv._support_violated(a, b):
                return math.inf, [np.zeros_like(a), np.zeros_like(b)]
            q, g_r, g_s = q_and_grads(rho, sigma)
            scale = 1.0 / ((alpha - 1.0) * max(q, 1e-300))
            val = math.log(max(q, 1e-300)) / (alpha - 1.0)
            return val, [la.hermitian_part(scale * g_r), la.hermitian_part(scale * g_s)]

        return vg, "min", lambda v: v / LN2, lambda g, v: g / LN2

    if family == "petz":
        def q_and_grads(rho, sigma):
            a = n_map(rho)
            b = m_map(sigma)
            ag = a if alpha < 1.0 else _smooth_if_deficient(a)
            bg = _smooth_if_deficient(b)
            wa, va = np.linalg.eigh(la.hermitian_part(ag))
            wb, vb = np.linalg.eigh(la.hermitian_part(bg))
            wa_f = np.maximum(wa, 0.0)
            wb_f = np.maximum(wb, 1e-300)
            a_pow = (va * np.maximum(wa_f, 1e-300) ** alpha) @ va.conj().T
            b_pow = (vb * wb_f ** (1.0 - alpha)) @ vb.conj().T
            q = float(np.real(np.trace(a_pow @ b_pow)))
            mult_a = la.frechet_multiplier(np.maximum(wa_f, 1e-300), va,
                                           lambda x: x ** alpha, lambda x: alpha * x ** (alpha - 1.0))
            mult_b = la.frechet_multiplier(wb_f, vb, lambda x: x ** (1.0 - alpha),
                                           lambda x: (1.0 - alpha) * x ** (-alpha))
            g_a = mult_a(b_pow)
            g_b = mult_b(a_pow)
            return q, adjoint_apply(n_map, g_a), adjoint_apply(m_map, g_b)

        if alpha < 1.0:
            def vg(mats):
                q, g_r, g_s = q_and_grads(*mats)
                return q, [la.hermitian_part(g_r), la.hermitian_part(g_s)]

            return vg, "max", lambda q: math.inf if q <= 0 else math.log(q) / ((alpha - 1.0) * LN2), \
                lambda g, q: g / (abs(alpha - 1.0) * max(q, 1e-300) * LN2)

        def vg(mats):
            rho, sigma = mats
            a = n_map(rho)
            b = m_map(sigma)
            if dv._support_violated(a, b):
                return math.inf, [np.zeros_like(a), np.zeros_like(b)]
            q, g_r, g_s = q_and_grads(rho, sigma)
            scale = 1.0 / ((alpha - 1.0) * max(q, 1e-300))
            val = math.log(max(q, 1e-300)) / (alpha - 1.0)
            return val, [la.hermitian_part(scale * g_r), la.hermitian_part(scale * g_s)]

        return vg, "min", lambda v: v / LN2, lambda g, v: g / LN2

    raise ValidationError(f"min_output does not support family {family!r}")


def _final_value_bits(n_map, m_map, family, alpha, rho, sigma) -> float:
    a, b = n_map(rho), m_map(sigma)
    if family == "umegaki" or alpha == 1.0:
        return dv.umegaki(a, b)
    if family == "sandwiched":
        return dv.sandwiched(a, b, alpha)
    if family == "petz":
        return dv.petz(a, b, alpha)
    raise ValidationError(family)


def min_output(n_ch: QuantumMap, m_ch: QuantumMap, family: str = "umegaki",
               alpha: Optional[float] = None, n: int = 1, tol: float = 1e-6,
               max_iter: int = 5000, restarts: int = 4, seed: int = 0,
               init=None) -> MinOutputResult:
    """Worst-case channel divergence inf_{rho,sigma} D(N^n(rho) || M^n(sigma)).

    Frank-Wolfe over the product of two density sets; the linear oracle is an
    extreme eigenvector of the gradient and the FW gap certifies optimality.
    A non-converged result is still a valid upper bound on the infimum.
    """
    if family == "sandwiched" and alpha is None:
        raise ValidationError("sandwiched min_output needs alpha")
    if family == "petz" and alpha is None:
        raise ValidationError("petz min_output needs alpha")
    n_pow, m_pow = _power_maps(n_ch, m_ch, n)
    vg, sense, to_bits, gap_to_bits = _objective(n_pow, m_pow, family, alpha)
    prog = solve_density_program(vg, [n_pow.in_dim, m_pow.in_dim], sense=sense, tol=tol,
                                 max_iter=max_iter, restarts=restarts, seed=seed, init=init)
    rho_s, sigma_s = prog.mats
    value = _final_value_bits(n_pow, m_pow, family, alpha, rho_s, sigma_s)
    gap_bits = gap_to_bits(prog.fw_gap, prog.value) if math.isfinite(prog.value) else math.inf
    return MinOutputResult(value, rho_s, sigma_s, float(gap_bits), n_copies=n,
                           converged=prog.converged, family=family, alpha=alpha,
                           extras={"n_iter": prog.n_iter})


def min_output_same_input(n_ch: QuantumMap, m_ch: QuantumMap, family: str = "measured",
                          alpha: float = 1.0, n: int = 1, tol: float = 1e-6,
                          seed: int = 0, **kwargs) -> MinOutputResult:
    """Same-input variant inf_rho D(N^n(rho) || M^n(rho)).

    Measured families route to the saddle solver; the smooth families reuse
    the Frank-Wolfe machinery with a single shared input variable.
    """
    if family in ("measured", "measured_renyi"):
        return min_output_measured(n_ch, m_ch, alpha=alpha, n=n, same_input=True,
                                   seed=seed, **kwargs)
    n_pow, m_pow = _power_maps(n_ch, m_ch, n)
    vg2, sense, to_bits, gap_to_bits = _objective(n_pow, m_pow, family, alpha)

    def vg(mats):
        val, grads = vg2([mats[0], mats[0]])
        return val, [grads[0] + grads[1]]

    prog = solve_density_program(vg, [n_pow.in_dim], sense=sense, tol=tol, seed=seed,
                                 **{k: v for k, v in kwargs.items() if k in ("max_iter", "restarts")})
    rho_s = prog.mats[0]
    value = _final_value_bits(n_pow, m_pow, family, alpha, rho_s, rho_s)
    gap_bits = gap_to_bits(prog.fw_gap, prog.value) if math.isfinite(prog.value) else math.inf
    return MinOutputResult(value, rho_s, rho_s, float(gap_bits), n_copies=n,
                           converged=prog.converged, family=family, alpha=alpha)


# ---------------------------------------------------------------------------
# Measured channel divergence: inf over states of a sup over measurements
# ---------------------------------------------------------------------------

def _measured_inner(a: np.ndarray, b: np.ndarray, alpha: float, warm, quality: int, seed: int):
    """Inner measurement ascent; returns (value_bits, basis)."""
    if alpha == 1.0:
        res = dv.measured_relative(a, b, n_starts=quality, seed=seed, h0=warm)
        return res.value, res.witness.get("basis"), res.witness.get("H")
    res = dv.measured_renyi(a, b, alpha, n_starts=max(quality, 1), seed=seed, u0=warm)
    return res.value, res.witness.get("basis"), res.witness.get("basis")


def _classical_grads(a, b, basis, alpha):
    """Gradient of the fixed-basis classical divergence wrt the two outputs (nats)."""
    p = np.maximum(np.real(np.einsum("ij,jk,ki->i", basis.conj().T, a, basis)), 0.0)
    q = np.maximum(np.real(np.einsum("ij,jk,ki->i", basis.conj().T, b, basis)), 1e-18)
    if alpha == 1.0:
        cp = np.log(np.maximum(p, 1e-18) / q) + 1.0
        cq = -p / q
    else:
        s = float((p ** alpha * q ** (1.0 - alpha)).sum())
        coef = 1.0 / ((alpha - 1.0) * max(s, 1e-300))
        with np.errstate(all="ignore"):
            cp = coef * alpha * np.maximum(p, 1e-18) ** (alpha - 1.0) * q ** (1.0 - alpha)
            cq = coef * (1.0 - alpha) * p ** alpha * q ** (-alpha)
        cp[~np.isfinite(cp)] = 0.0
        cq[~np.isfinite(cq)] = 0.0
    g_a = (basis * cp) @ basis.conj().T
    g_b = (basis * cq) @ basis.conj().T
    return la.hermitian_part(g_a), la.hermitian_part(g_b)


def _fixed_basis_value(a, b, basis, alpha) -> float:
    p = np.maximum(np.real(np.einsum("ij,jk,ki->i", basis.conj().T, a, basis)), 0.0)
    q = np.maximum(np.real(np.einsum("ij,jk,ki->i", basis.conj().T, b, basis)), 0.0)
    return dv.classical_kl(p, q) if alpha == 1.0 else dv.classical_renyi(p, q, alpha)


def min_output_measured(n_ch: QuantumMap, m_ch: QuantumMap, alpha: float = 1.0, n: int = 1,
                        same_input: bool = False, outer_iters: int = 350,
                        polish_iters: int = 120, restarts: int = 2, seed: int = 0,
                        tol_rel: float = 1e-6) -> MinOutputResult:
    """Measured minimum output channel divergence (saddle estimation).

    Inner: measurement ascent. Outer: projected subgradient descent over the
    input states using the inner-optimal measurement's classical-divergence
    gradient (a valid subgradient of the pointwise supremum), followed by a
    quasi-Newton polish. The reported ``value`` is the full inner ascent at
    the best outer point, an upper-bound estimate of the true inf-sup;
    ``extras["certified_lower"]`` is a sound lower bound obtained by a
    certified Frank-Wolfe minimization of the final fixed-basis divergence.
    """
    n_pow, m_pow = _power_maps(n_ch, m_ch, n)
    d_in = n_pow.in_dim
    n_vars = 1 if same_input else 2
    rng = np.random.default_rng(seed)

    def outputs(mats):
        rho = mats[0]
        sigma = mats[0] if same_input else mats[1]
        return n_pow(rho), m_pow(sigma)

    def pulled_back(g_a, g_b):
        g_rho = adjoint_apply(n_pow, g_a)
        g_sigma = adjoint_apply(m_pow, g_b)
        if same_input:
            return [la.hermitian_part(g_rho + g_sigma)]
        return [la.hermitian_part(g_rho), la.hermitian_part(g_sigma)]

    best_val, best_mats, best_basis = math.inf, None, None
    inits = [[np.eye(d_in, dtype=complex) / d_in for _ in range(n_vars)]]
    for _ in range(restarts):
        inits.append([la.random_density(d_in, rng.integers(2**31)) for _ in range(n_vars)])

    for mats0 in inits:
        mats = [m.copy() for m in mats0]
        warm = None
        cur_val = math.inf
        for k in range(outer_iters):
            a, b = outputs(mats)
            val, basis, warm = _measured_inner(a, b, alpha, warm, quality=0, seed=seed)
            if not math.isfinite(val):
                mats = [0.7 * m + 0.3 * np.eye(d_in) / d_in for m in mats]
                continue
            if val < best_val:
                best_val, best_mats, best_basis = val, [m.copy() for m in mats], basis
            g_a, g_b = _classical_grads(a, b, basis, alpha)
            grads = pulled_back(g_a, g_b)
            norm = math.sqrt(sum(float(np.linalg.norm(g)) ** 2 for g in grads))
            if norm <= 1e-12:
                break
            step = 0.35 / math.sqrt(k + 1.0) / norm
            mats = [la.project_to_density(m - step * g) for m, g in zip(mats, grads)]
            if k > 20 and abs(val - cur_val) <= tol_rel * max(abs(val), 1.0):
                break
            cur_val = val

        # quasi-Newton polish with Danskin gradients on the T T* chart
        mats = best_mats if best_mats is not None else mats
        warm_holder = {"w": warm}

        def fun(x):
            ts = [x[2 * i * d_in * d_in:(2 * i + 1) * d_in * d_in].reshape(d_in, d_in)
                  + 1j * x[(2 * i + 1) * d_in * d_in:(2 * i + 2) * d_in * d_in].reshape(d_in, d_in)
                  for i in range(n_vars)]
            mats_x, traces = [], []
            for t in ts:
                tt = t @ t.conj().T
                s = float(np.trace(tt).real)
                if s <= 1e-300:
                    return 1e30, np.zeros_like(x)
                mats_x.append(tt / s)
                traces.append(s)
            a, b = outputs(mats_x)
            val, basis, warm_holder["w"] = _measured_inner(a, b, alpha, warm_holder["w"], 0, seed)
            if not math.isfinite(val):
                return 1e30, np.zeros_like(x)
            g_a, g_b = _classical_grads(a, b, basis, alpha)
            grads = pulled_back(g_a, g_b)
            out = []
            for t, s, g, rho in zip(ts, traces, grads, mats_x):
                aa = g - float(np.real(np.trace(g @ rho))) * np.eye(d_in)
                gt = (2.0 / s) * (la.hermitian_part(aa) @ t)
                out.append(np.concatenate([gt.real.ravel(), gt.imag.ravel()]))
            return val * LN2, LN2 * np.concatenate(out)

        x0 = []
        for m in mats:
            w, v = np.linalg.eigh(la.hermitian_part(m))
            t = v * np.sqrt(np.maximum(w, 1e-10))
            x0.extend([t.real.ravel(), t.imag.ravel()])
        res = minimize(fun, np.concatenate(x0), jac=True, method="L-BFGS-B",
                       options={"maxiter": polish_iters, "ftol": 1e-13, "gtol": 1e-10})
        ts = [res.x[2 * i * d_in * d_in:(2 * i + 1) * d_in * d_in].reshape(d_in, d_in)
              + 1j * res.x[(2 * i + 1) * d_in * d_in:(2 * i + 2) * d_in * d_in].reshape(d_in, d_in)
              for i in range(n_vars)]
        mats_cand = []
        for t in ts:
            tt = t @ t.conj().T
            mats_cand.append(tt / float(np.trace(tt).real))
        a, b = outputs(mats_cand)
        val, basis, _ = _measured_inner(a, b, alpha, warm_holder["w"], quality=4, seed=seed)
        if val < best_val:
            best_val, best_mats, best_basis = val, mats_cand, basis

    # full-quality inner ascent at the winner
    a, b = outputs(best_mats)
    val, basis, _ = _measured_inner(a, b, alpha, None, quality=6, seed=seed)
    if val > best_val and basis is not None:
        best_basis = basis
        best_val = val  # the sup at the chosen point: honest upper-bound estimate

    # certified lower bound: FW minimum of the final fixed-basis divergence
    certified = -math.inf
    if best_basis is not None:
        fixed = best_basis

        def vg(mats):
            a, b = outputs(mats)
            v = _fixed_basis_value(a, b, fixed, alpha) * LN2
            g_a, g_b = _classical_grads(a, b, fixed, alpha)
            return v, pulled_back(g_a, g_b)

        prog = solve_density_program(vg, [d_in] * n_vars, sense="min", tol=1e-8,
                                     max_iter=3000, restarts=1, seed=seed)
        if math.isfinite(prog.value):
            certified = (prog.value - prog.fw_gap) / LN2

    rho_s = best_mats[0]
    sigma_s = best_mats[0] if same_input else best_mats[1]
    return MinOutputResult(float(best_val), rho_s, sigma_s, fw_gap=math.nan, n_copies=n,
                           converged=True, family="measured" if alpha == 1.0 else "measured_renyi",
                           alpha=alpha, extras={"certified_lower": float(certified),
                                                "basis": best_basis, "same_input": same_input})


# ---------------------------------------------------------------------------
# Max-relative entropy: bisection on t with a certified convex feasibility test
# ---------------------------------------------------------------------------

def _softmax_lambda_min(n_pow, m_pow, t, seed=0, init=None,
                        beta_stages=(200.0, 2e3, 2e4, 2e5)):
    """min over (rho, sigma) of lambda_max(N(rho) - t M(sigma)), bracketed.

    Uses the smoothed log-sum-exp majorant of lambda_max (gap <= log(d)/beta)
    so the inner problem stays smooth and jointly convex. Escalates the
    smoothing only while the sign of the minimum is still uncertain; returns
    (upper, lower, witness) with lower = value - fw_gap - log(d)/beta.
    """
    d_out = n_pow.out_dim
    mats = init if init is not None else [np.eye(n_pow.in_dim) / n_pow.in_dim,
                                          np.eye(m_pow.in_dim) / m_pow.in_dim]
    exact = la.max_eig(n_pow(mats[0]) - t * m_pow(mats[1]))
    if exact <= 0.0:
        return exact, -math.inf, mats
    upper, lower = exact, -math.inf
    for beta in beta_stages:
        def vg(mats_):
            rho, sigma = mats_
            x = la.hermitian_part(n_pow(rho) - t * m_pow(sigma))
            w, v = np.linalg.eigh(x)
            shifted = np.exp(beta * (w - w[-1]))
            z = shifted.sum()
            f = float(w[-1] + math.log(z) / beta)
            g_x = (v * (shifted / z)) @ v.conj().T
            return f, [la.hermitian_part(adjoint_apply(n_pow, g_x)),
                       la.hermitian_part(-t * adjoint_apply(m_pow, g_x))]

        prog = solve_density_program(vg, [n_pow.in_dim, m_pow.in_dim], sense="min",
                                     tol=1e-9, max_iter=800, restarts=0, seed=seed,
                                     init=mats, polish_every=25)
        mats = prog.mats
        slack = math.log(d_out) / beta
        exact = la.max_eig(n_pow(mats[0]) - t * m_pow(mats[1]))
        upper = min(prog.value, exact)
        lower = prog.value - prog.fw_gap - slack
        if upper <= 0.0 or lower > 0.0:
            break
    return upper, lower, mats


def dmax_min_output(n_ch: QuantumMap, m_ch: QuantumMap, n: int = 1, tol: float = 1e-6,
                    seed: int = 0, tau_cap: float = 64.0) -> MinOutputResult:
    """Minimum output max-relative entropy via bisection on the threshold.

    Feasibility of "exists rho, sigma with N(rho) <= t M(sigma)" is decided
    by the certified convex minimization of lambda_max(N(rho) - t M(sigma)).
    """
    n_pow, m_pow = _power_maps(n_ch, m_ch, n)

    def feasible(tau, init):
        upper, lower, mats = _softmax_lambda_min(n_pow, m_pow, 2.0 ** tau, seed=seed, init=init)
        if upper <= 0.0:
            return True, mats
        if lower > 0.0:
            return False, mats
        # residual ambiguity band ~ log(d)/beta_max: classify by midpoint sign
        return 0.5 * (upper + lower) <= 0.0, mats

    d_in = n_pow.in_dim
    mixed = [np.eye(d_in, dtype=complex) / d_in, np.eye(m_pow.in_dim, dtype=complex) / m_pow.in_dim]
    # initial bracket: any fixed pair gives a feasible threshold; the trace
    # bound tr N(rho) = 1 <= t * tr M(sigma) gives an infeasible one
    hi_guess = dv.dmax(n_pow(mixed[0]), m_pow(mixed[1]))
    if not math.isfinite(hi_guess):
        hi_guess = tau_cap
    tau_hi = min(float(hi_guess) + 1e-9, tau_cap)
    tau_lo = -float(m_pow.log2_trace_bound()) - 1e-6

    ok, mats = feasible(tau_hi, mixed)
    while not ok and tau_hi < tau_cap:
        tau_hi += 4.0
        ok, mats = feasible(tau_hi, mats)
    if not ok:
        return MinOutputResult(math.inf, mixed[0], mixed[1], math.inf,
                               n_copies=n, converged=False, family="max")
    witness = mats
    if tau_lo >= tau_hi:
        tau_lo = tau_hi - 1.0
    ok_lo, _ = feasible(tau_lo, mats)
    while ok_lo and tau_lo > -tau_cap:
        tau_hi = tau_lo
        tau_lo -= 4.0
        ok_lo, _ = feasible(tau_lo, mats)

    while tau_hi - tau_lo > tol:
        mid = 0.5 * (tau_lo + tau_hi)
        ok, mats = feasible(mid, mats)
        if ok:
            tau_hi = mid
            witness = mats
        else:
            tau_lo = mid
    rho_s, sigma_s = witness
    return MinOutputResult(float(tau_hi), rho_s, sigma_s, fw_gap=float(tau_hi - tau_lo),
                           n_copies=n, converged=True, family="max")


# ---------------------------------------------------------------------------
# Fidelity (alpha = 1/2): jointly concave maximization with Danskin gradients
# ---------------------------------------------------------------------------

def fidelity_min_output(n_ch: QuantumMap, m_ch: QuantumMap, n: int = 1, tol: float = 1e-9,
                        seed: int = 0, restarts: int = 3) -> MinOutputResult:
    """Minimum output divergence at Renyi order 1/2: value = -2 log2 max F.

    Maximizes the jointly concave root fidelity F(N(rho), M(sigma)) by
    Frank-Wolfe eigen-updates; the supergradient pair comes from the
    variational form 2F = min_X tr[N(rho) X] + tr[M(sigma) X^{-1}].
    """
    n_pow, m_pow = _power_maps(n_ch, m_ch, n)
    d = n_pow.out_dim
    floor = 1e-11

    def vg(mats):
        rho, sigma = mats
        a = n_pow(rho)
        b = m_pow(sigma)
        ag = la.hermitian_part(a + floor * np.eye(d))
        bg = la.hermitian_part(b + floor * np.eye(d))
        sa = la.mat_sqrt(ag)
        mid = la.hermitian_part(sa @ bg @ sa)
        wm, vm = np.linalg.eigh(mid)
        wm = np.maximum(wm, 1e-300)
        mid_half = (vm * np.sqrt(wm)) @ vm.conj().T
        mid_inv_half = (vm * (1.0 / np.sqrt(wm))) @ vm.conj().T
        f_val = float(np.sqrt(wm).sum())
        sa_inv = la.mat_pow(ag, -0.5)
        x_star = la.hermitian_part(sa_inv @ mid_half @ sa_inv)
        x_inv = la.hermitian_part(sa @ mid_inv_half @ sa)
        return f_val, [la.hermitian_part(0.5 * adjoint_apply(n_pow, x_star)),
                       la.hermitian_part(0.5 * adjoint_apply(m_pow, x_inv))]

    prog = solve_density_program(vg, [n_pow.in_dim, m_pow.in_dim], sense="max", tol=tol,
                                 max_iter=4000, restarts=restarts, seed=seed)
    rho_s, sigma_s = prog.mats
    f_star = la.fidelity(n_pow(rho_s), m_pow(sigma_s))
    f_star = min(max(f_star, 1e-300), 1.0)
    value = -2.0 * math.log2(f_star)
    gap_bits = 2.0 * prog.fw_gap / (f_star * LN2)
    return MinOutputResult(float(value), rho_s, sigma_s, float(gap_bits), n_copies=n,
                           converged=prog.converged, family="sandwiched", alpha=0.5,
                           extras={"fidelity": f_star})


# ---------------------------------------------------------------------------
# Regularization bracket and chain-rule margins
# ---------------------------------------------------------------------------

def regularization_bracket(n_ch: QuantumMap, m_ch: QuantumMap, alpha: float = 1.0,
                           n_max: int = 2, family: str = "umegaki", seed: int = 0,
                           tol: float = 1e-6, measured_opts: dict | None = None) -> RegularizationBracket:
    """Two-sided bracket for the regularized minimum output divergence.

    Upper end: min over n <= n_max of the per-copy finite-n value (valid since
    the amortized divergence equals the regularized one and lower-bounds every
    finite-n value). Lower end: max over n of the per-copy certified lower
    bound of the measured divergence (valid by superadditivity of the
    measured divergence over the image sets).
    """
    measured_opts = dict(measured_opts or {})
    per_n = []
    upper = math.inf
    lower = -math.inf
    for n in range(1, n_max + 1):
        if family == "umegaki" or alpha == 1.0:
            up_res = min_output(n_ch, m_ch, family="umegaki", n=n, tol=tol, seed=seed)
        else:
            up_res = min_output(n_ch, m_ch, family=family, alpha=alpha, n=n, tol=tol, seed=seed)
        up_n = up_res.value / n
        meas = min_output_measured(n_ch, m_ch, alpha=alpha, n=n, seed=seed, **measured_opts)
        low_n = meas.extras.get("certified_lower", -math.inf) / n
        per_n.append({"n": n, "upper": up_n, "lower": low_n,
                      "measured_estimate": meas.value / n})
        upper = min(upper, up_n)
        lower = max(lower, low_n)
    return RegularizationBracket(float(lower), float(upper), per_n, family=family, alpha=alpha)


def chain_rule_margin(n_ch: QuantumMap, m_ch: QuantumMap, rho_ra, sigma_ra,
                      dims: tuple[int, int], family: str = "measured", alpha: float = 1.0,
                      bound: float | None = None, bound_mode: str = "sound",
                      seed: int = 0) -> float:
    """Margin of the chain rule D(outputs) - D(reduced) - B.

    For the measured family B is the single-copy measured channel divergence
    (its certified lower bound in the default sound mode); for the sandwiched
    family B is the lower end of the regularization bracket. ``bound`` lets a
    caller amortize B across many state pairs. A nonnegative margin is the
    sound test of the chain rule; ``bound_mode="optimistic"`` substitutes the
    unsound upper end and is for exploration only.
    """
    d_r, d_a = dims
    rho_ra = as_matrix(rho_ra)
    sigma_ra = as_matrix(sigma_ra)
    out_r = apply_map(n_ch, rho_ra, dims=[d_r, d_a], which=1)
    out_s = apply_map(m_ch, sigma_ra, dims=[d_r, d_a], which=1)
    red_r = la.partial_trace(rho_ra, [d_r, d_a], [0])
    red_s = la.partial_trace(sigma_ra, [d_r, d_a], [0])
    if family == "measured":
        d_out = dv.measured_relative(out_r, out_s, seed=seed).value if alpha == 1.0 \
            else dv.measured_renyi(out_r, out_s, alpha, seed=seed).value
        d_red = dv.measured_relative(red_r, red_s, seed=seed).value if alpha == 1.0 \
            else dv.measured_renyi(red_r, red_s, alpha, seed=seed).value
        if bound is None:
            res = min_output_measured(n_ch, m_ch, alpha=alpha, n=1, seed=seed)
            bound = res.extras["certified_lower"] if bound_mode == "sound" else res.value
    elif family == "sandwiched":
        d_out = dv.sandwiched(out_r, out_s, alpha) if alpha != 1.0 else dv.umegaki(out_r, out_s)
        d_red = dv.sandwiched(red_r, red_s, alpha) if alpha != 1.0 else dv.umegaki(red_r, red_s)
        if bound is None:
            br = regularization_bracket(n_ch, m_ch, alpha=alpha, n_max=2,
                                        family="sandwiched" if alpha != 1.0 else "umegaki", seed=seed)
            bound = br.lower if bound_mode == "sound" else br.upper
    else:
        raise ValidationError(f"chain_rule_margin supports measured or sandwiched, not {family!r}")
    if math.isinf(d_out) and d_out > 0:
        return math.inf
    return float(d_out - d_red - bound)


def image_support_function(n_ch: QuantumMap, n: int, x) -> float:
    """Support function of the n-copy image set: lambda_max of the adjoint action."""
    x = as_matrix(x)
    n_pow = tensor_power_map(n_ch, n) if n > 1 else n_ch
    return la.max_eig(adjoint_apply(n_pow, x))


def amortized_gap_search(n_ch: QuantumMap, m_ch: QuantumMap, alpha: float = 1.0,
                         r_dims=(1, 2, 3, 4), seed: int = 0, starts: int = 3,
                         maxiter: int = 300) -> dict:
    """Best amortized gap D(outputs) - D(reduced) over reference dims |R| <= 4.

    The infimum over the reference system is not claimed to converge; this
    reports the best value found (an upper bound on the regularized channel
    divergence) together with the reference dimension attaining it.
    """
    best = {"value": math.inf, "r_dim": None}
    rng = np.random.default_rng(seed)
    for d_r in r_dims:
        d_in = d_r * n_ch.in_dim

        def value(x):
            half = x.size // 2
            tr_ = x[:half].reshape(2, d_in, d_in)
            ts_ = x[half:].reshape(2, d_in, d_in)
            rho_t = tr_[0] + 1j * tr_[1]
            sig_t = ts_[0] + 1j * ts_[1]
            rho = rho_t @ rho_t.conj().T
            sig = sig_t @ sig_t.conj().T
            tr_r, tr_s = float(np.trace(rho).real), float(np.trace(sig).real)
            if tr_r <= 1e-300 or tr_s <= 1e-300:
                return 1e30
            rho /= tr_r
            sig /= tr_s
            out_r = apply_map(n_ch, rho, dims=[d_r, n_ch.in_dim], which=1)
            out_s = apply_map(m_ch, sig, dims=[d_r, m_ch.in_dim], which=1)
            red_r = la.partial_trace(rho, [d_r, n_ch.in_dim], [0])
            red_s = la.partial_trace(sig, [d_r, n_ch.in_dim], [0])
            d_out = dv.umegaki(out_r, out_s) if alpha == 1.0 else dv.sandwiched(out_r, out_s, alpha)
            d_red = dv.umegaki(red_r, red_s) if alpha == 1.0 else dv.sandwiched(red_r, red_s, alpha)
            if not (math.isfinite(d_out) and math.isfinite(d_red)):
                return 1e30
            return d_out - d_red

        for _ in range(starts):
            x0 = rng.standard_normal(4 * d_in * d_in)
            res = minimize(value, x0, method="Nelder-Mead",
                           options={"maxiter": maxiter * d_in, "fatol": 1e-9, "xatol": 1e-9})
            if res.fun < best["value"]:
                best = {"value": float(res.fun), "r_dim": d_r}
    return best
