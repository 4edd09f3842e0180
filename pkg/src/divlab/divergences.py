"""State-level divergences with optimality certificates.

Families: Umegaki relative entropy, sandwiched and Petz Renyi divergences,
max-relative entropy, hypothesis-testing relative entropy (Neyman-Pearson
construction with a primal/dual certificate), and measured divergences
(variational / measurement-basis ascents reporting certified lower bounds).

All values are reported in bits; natural logarithms are used internally.
Infinite divergences are reported as ``math.inf`` (serialized as "inf").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import linalg as la
from .config import LN2, TOL_PSD, TOL_RANK
from .errors import SolverError, ValidationError
from .qobjects import as_matrix

__all__ = [
    "DivergenceSpec",
    "CertifiedValue",
    "FAMILIES",
    "umegaki",
    "sandwiched",
    "petz",
    "dmax",
    "hypothesis_testing",
    "measured_relative",
    "measured_renyi",
    "classical_kl",
    "classical_renyi",
    "evaluate",
]

FAMILIES = ("umegaki", "sandwiched", "petz", "max", "measured", "measured_renyi", "hypothesis")


@dataclass(frozen=True)
class DivergenceSpec:
    """Family tag plus the parameters the family needs (alpha, epsilon)."""

    family: str
    alpha: Optional[float] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown divergence family {self.family!r}; choose from {FAMILIES}")
        if self.family == "sandwiched":
            if self.alpha is None or self.alpha < 0.5:
                raise ValidationError("sandwiched divergence requires alpha in [1/2, inf)")
        if self.family in ("petz", "measured_renyi"):
            if self.alpha is None or self.alpha <= 0 or self.alpha == 1.0:
                raise ValidationError(f"{self.family} requires alpha in (0,1) or (1,inf)")
        if self.family == "hypothesis":
            if self.epsilon is None or not (0.0 < self.epsilon < 1.0):
                raise ValidationError("hypothesis family requires epsilon in (0, 1)")


@dataclass
class CertifiedValue:
    """A value in bits together with its optimality witness and gap.

    ``gap`` is the primal-dual (or Frank-Wolfe) gap when one is available;
    ``None`` flags a certified one-sided bound (measured families report
    valid lower bounds whose distance to the optimum is unknown).
    """

    value: float
    witness: dict = field(default_factory=dict)
    gap: Optional[float] = 0.0
    converged: bool = True


def _validate_state(rho, name: str = "rho") -> np.ndarray:
    m = la.check_hermitian(as_matrix(rho), name)
    if la.min_eig(m) < -TOL_PSD:
        raise ValidationError(f"{name} must be PSD")
    return m


def _support_data(sigma: np.ndarray):
    w, v = np.linalg.eigh(la.hermitian_part(sigma))
    cutoff = TOL_RANK * max(w.max(), 0.0)
    mask = w > cutoff
    return w, v, mask


def _support_violated(rho: np.ndarray, sigma: np.ndarray) -> bool:
    """True when supp(rho) is not contained in supp(sigma) (rank-tolerance test)."""
    w, v, mask = _support_data(sigma)
    if mask.all():
        return False
    perp = v[:, ~mask]
    leak = float(np.real(np.trace(perp.conj().T @ rho @ perp)))
    return leak > 1e-9 * max(1.0, float(np.trace(rho).real))


def classical_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence in bits with 0 log 0 = 0; infinite if q vanishes where p > 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0.0
    if np.any(q[mask] <= 0.0):
        return math.inf
    return float((p[mask] * np.log(p[mask] / q[mask])).sum() / LN2)


def classical_renyi(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    """Classical Renyi divergence of order alpha in bits."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if alpha == 1.0:
        return classical_kl(p, q)
    if alpha > 1.0 and np.any(q[p > 0.0] <= 0.0):
        return math.inf
    mask = (p > 0.0) & (q > 0.0)
    s = float((p[mask] ** alpha * q[mask] ** (1.0 - alpha)).sum())
    if s <= 0.0:
        return math.inf
    return float(np.log(s) / ((alpha - 1.0) * LN2))


def umegaki(rho, sigma) -> float:
    """tr[rho (log rho - log sigma)] in bits; inf when supports do not nest."""
    rho = _validate_state(rho, "rho")
    sigma = _validate_state(sigma, "sigma")
    if _support_violated(rho, sigma):
        return math.inf
    log_rho = la.mat_log(rho, support_only=True)
    log_sigma = la.mat_log(sigma, support_only=True)
    return float(np.real(np.trace(rho @ (log_rho - log_sigma))) / LN2)


def sandwiched(rho, sigma, alpha: float) -> float:
    """Sandwiched Renyi divergence of order alpha in [1/2, inf) \\ {1}, in bits.

    For alpha > 1 the support condition supp(rho) <= supp(sigma) applies;
    for alpha < 1 the trace functional is evaluated on the support of sigma
    (finite whenever the supports overlap).
    """
    if alpha < 0.5:
        raise ValidationError("sandwiched divergence requires alpha >= 1/2")
    if alpha == 1.0:
        raise ValidationError("alpha = 1 is the Umegaki relative entropy; call umegaki")
    rho = _validate_state(rho, "rho")
    sigma = _validate_state(sigma, "sigma")
    if alpha > 1.0 and _support_violated(rho, sigma):
        return math.inf
    gamma = (1.0 - alpha) / (2.0 * alpha)
    s_pow = la.mat_pow(sigma, gamma, support_only=True)
    a = la.hermitian_part(s_pow @ rho @ s_pow)
    w = np.linalg.eigvalsh(a)
    w = np.maximum(w, 0.0)
    q = float((w ** alpha).sum())
    if q <= 0.0:
        return math.inf
    return float(np.log(q) / ((alpha - 1.0) * LN2))


def petz(rho, sigma, alpha: float) -> float:
    """Petz Renyi divergence (1/(alpha-1)) log tr[rho^a sigma^(1-a)] in bits."""
    if alpha <= 0.0 or alpha == 1.0:
        raise ValidationError("petz requires alpha in (0,1) or (1,inf)")
    rho = _validate_state(rho, "rho")
    sigma = _validate_state(sigma, "sigma")
    if alpha > 1.0 and _support_violated(rho, sigma):
        return math.inf
    r_pow = la.mat_pow(rho, alpha, support_only=True)
    s_pow = la.mat_pow(sigma, 1.0 - alpha, support_only=True)
    q = float(np.real(np.trace(r_pow @ s_pow)))
    if q <= 0.0:
        return math.inf
    return float(np.log(q) / ((alpha - 1.0) * LN2))


def dmax(rho, sigma) -> float:
    """Max-relative entropy log2 min{t : rho <= t sigma}, inf outside supp(sigma)."""
    rho = _validate_state(rho, "rho")
    sigma = _validate_state(sigma, "sigma")
    if _support_violated(rho, sigma):
        return math.inf
    s_inv_half = la.mat_pow(sigma, -0.5, support_only=True)
    val = la.max_eig(s_inv_half @ rho @ s_inv_half)
    if val <= 0.0:
        return -math.inf
    return float(np.log2(val))


# ---------------------------------------------------------------------------
# Hypothesis-testing relative entropy: quantum Neyman-Pearson with certificate
# ---------------------------------------------------------------------------

def _np_dual(t: float, rho: np.ndarray, sigma: np.ndarray, one_minus_eps: float) -> float:
    """Dual objective t(1-eps) - tr[(t rho - sigma)_+], concave in t >= 0."""
    w = np.linalg.eigvalsh(la.hermitian_part(t * rho - sigma))
    return t * one_minus_eps - float(np.maximum(w, 0.0).sum())


def hypothesis_testing(rho, sigma, eps: float, max_iter: int = 300) -> CertifiedValue:
    """D_H,eps via the quantum Neyman-Pearson test, with a duality certificate.

    The witness test has the form M = P + c K where P projects onto the
    strictly positive part of (rho - t sigma), K onto its kernel, and the
    convex weight c is solved in closed form so that tr[rho M] = 1 - eps.
    The scalar dual max_{t>=0} [t(1-eps) - tr[(t rho - sigma)_+]] certifies
    optimality; the reported gap is primal - dual.
    """
    if not (0.0 < eps < 1.0):
        raise ValidationError("eps must lie in (0, 1)")
    rho = _validate_state(rho, "rho")
    sigma = _validate_state(sigma, "sigma")
    dim = rho.shape[0]
    one_minus_eps = 1.0 - eps

    # beta = 0 exactly when enough rho-mass lies outside supp(sigma)
    w_s, v_s, mask_s = _support_data(sigma)
    if not mask_s.all():
        perp = v_s[:, ~mask_s]
        outside = float(np.real(np.trace(perp.conj().T @ rho @ perp)))
        if outside >= one_minus_eps - 1e-15:
            m_wit = perp @ perp.conj().T
            return CertifiedValue(math.inf, witness={"M": m_wit, "threshold": math.inf, "beta": 0.0}, gap=0.0)

    # ternary search maximizes the piecewise-linear concave dual in s = 1/t
    # (s is the primal likelihood-ratio threshold: M_s tests rho - s sigma)
    def type1_accept(s: float) -> float:
        w = np.linalg.eigvalsh(la.hermitian_part(rho - s * sigma))
        return float(np.maximum(w, 0.0).sum())

    # bracket the dual maximizer in t
    t_lo, t_hi = 0.0, 1.0
    grow = 0
    while grow < 200:
        w = np.linalg.eigvalsh(la.hermitian_part(t_hi * rho - sigma))
        pos = w > 0.0
        # dual derivative = (1-eps) - tr[rho P_{t rho - sigma > 0}]
        _, v = np.linalg.eigh(la.hermitian_part(t_hi * rho - sigma))
        p = v[:, pos]
        slope = one_minus_eps - float(np.real(np.trace(p.conj().T @ rho @ p)))
        if slope < 0.0:
            break
        t_lo = t_hi
        t_hi *= 2.0
        grow += 1
    else:
        raise SolverError("NP dual bracket did not close", best=(t_lo, t_hi))

    lo, hi = t_lo, t_hi
    for _ in range(max_iter):
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if _np_dual(m1, rho, sigma, one_minus_eps) < _np_dual(m2, rho, sigma, one_minus_eps):
            lo = m1
        else:
            hi = m2
    t_star = 0.5 * (lo + hi)
    dual = max(_np_dual(t, rho, sigma, one_minus_eps) for t in (lo, t_star, hi))

    # primal test at threshold s* = 1/t*, kernel weight in closed form
    s_star = 1.0 / t_star if t_star > 0 else math.inf
    diff = la.hermitian_part(rho - s_star * sigma)
    w, v = np.linalg.eigh(diff)
    # kernel band: relative to the spectral scale, floored by the rounding
    # noise of the inputs so an exactly-degenerate diff is classified kernel
    input_scale = float(np.abs(rho).max() + abs(s_star) * np.abs(sigma).max())
    ktol = max(1e-9 * np.abs(w).max(), 1e-13 * input_scale, 1e-300)
    pos_cols = v[:, w > ktol]
    ker_cols = v[:, np.abs(w) <= ktol]
    p_proj = pos_cols @ pos_cols.conj().T
    accept_pos = float(np.real(np.trace(p_proj @ rho)))
    m_wit = p_proj
    c = 0.0
    if ker_cols.shape[1]:
        k_proj = ker_cols @ ker_cols.conj().T
        accept_ker = float(np.real(np.trace(k_proj @ rho)))
        if accept_ker > 1e-15:
            c = (one_minus_eps - accept_pos) / accept_ker
            c = min(max(c, 0.0), 1.0)
            m_wit = p_proj + c * k_proj
    beta = float(np.real(np.trace(sigma @ m_wit)))
    gap = beta - dual
    value = math.inf if beta <= 0.0 else float(-np.log2(beta))
    witness = {"M": m_wit, "threshold": s_star, "kernel_weight": c, "beta": beta,
               "type1": float(1.0 - np.real(np.trace(rho @ m_wit))), "dual": dual}
    return CertifiedValue(value, witness=witness, gap=float(gap), converged=gap <= 1e-7)


# ---------------------------------------------------------------------------
# Measured relative entropy: concave variational ascent over Hermitian H
# ---------------------------------------------------------------------------

def _herm_to_vec(h: np.ndarray) -> np.ndarray:
    d = h.shape[0]
    iu = np.triu_indices(d, k=1)
    return np.concatenate([np.real(np.diag(h)), np.sqrt(2.0) * np.real(h[iu]), np.sqrt(2.0) * np.imag(h[iu])])


def _vec_to_herm(x: np.ndarray, d: int) -> np.ndarray:
    iu = np.triu_indices(d, k=1)
    k = d * (d - 1) // 2
    h = np.zeros((d, d), dtype=complex)
    h[np.diag_indices(d)] = x[:d]
    off = (x[d:d + k] + 1j * x[d + k:d + 2 * k]) / np.sqrt(2.0)
    h[iu] = off
    h += np.triu(h, k=1).conj().T
    return h


def _restrict_to_support(rho: np.ndarray, sigma: np.ndarray):
    """Project both states onto supp(sigma); returns (rho', sigma', isometry)."""
    w, v, mask = _support_data(sigma)
    cols = v[:, mask]
    return cols.conj().T @ rho @ cols, cols.conj().T @ sigma @ cols, cols


def _eigenbasis_kl(rho: np.ndarray, sigma: np.ndarray, basis: np.ndarray) -> float:
    p = np.real(np.einsum("ij,jk,ki->i", basis.conj().T, rho, basis))
    q = np.real(np.einsum("ij,jk,ki->i", basis.conj().T, sigma, basis))
    p = np.maximum(p, 0.0)
    q = np.maximum(q, 0.0)
    return classical_kl(p, q)


def measured_relative(rho, sigma, tol_grad: float = 1e-7, n_starts: int = 3,
                      seed: int = 0, h0: np.ndarray | None = None) -> CertifiedValue:
    """Measured relative entropy via ascent of tr[rho H] + 1 - tr[sigma exp(H)].

    The objective is concave in the Hermitian variable H; its stationary
    point yields an optimal projective measurement in the eigenbasis of
    exp(H). The reported value is the classical KL divergence of the
    eigenbasis-measurement outcome distributions, hence always a valid lower
    bound on the measured relative entropy. Returns +inf when supp(rho) is
    not contained in supp(sigma) (the ascent diverges there).
    """
    rho = _validate_state(rho, "rho")
    sigma = _validate_state(sigma, "sigma")
    if _support_violated(rho, sigma):
        return CertifiedValue(math.inf, witness={}, gap=None)
    rho_r, sigma_r, cols = _restrict_to_support(rho, sigma)
    d = rho_r.shape[0]

    def neg_val_grad(x: np.ndarray):
        h = _vec_to_herm(x, d)
        w, v = np.linalg.eigh(h)
        wc = np.clip(w, -700.0, 60.0)
        ew = np.exp(wc)
        exp_h = (v * ew) @ v.conj().T
        obj = float(np.real(np.trace(rho_r @ h))) + 1.0 - float(np.real(np.trace(sigma_r @ exp_h)))
        mult = la.frechet_multiplier(wc, v, np.exp, math.exp)
        grad_h = rho_r - mult(sigma_r)
        return -obj, -_herm_to_vec(la.hermitian_part(grad_h))

    rng = np.random.default_rng(seed)
    starts = []
    if h0 is not None:
        starts.append(_herm_to_vec(la.hermitian_part(h0)))
    # commuting-guess start log(rho) - log(sigma) is exact in the classical case
    guess = la.mat_log(rho_r + 1e-12 * np.eye(d)) - la.mat_log(sigma_r, support_only=True)
    starts.append(_herm_to_vec(guess))
    starts.append(np.zeros(d * d))
    while len(starts) < n_starts + 2:
        starts.append(_herm_to_vec(la.random_hermitian(d, rng.integers(2**31), scale=0.5)))

    best = None
    for x0 in starts:
        res = minimize(neg_val_grad, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-14, "gtol": tol_grad})
        if best is None or res.fun < best.fun:
            best = res
    h_star = _vec_to_herm(best.x, d)
    _, v = np.linalg.eigh(h_star)
    value = _eigenbasis_kl(rho_r, sigma_r, v)
    # the variational objective itself is also a valid lower bound; keep the larger
    value = max(value, -best.fun / LN2)
    grad_norm = float(np.linalg.norm(best.jac))
    basis = cols @ v  # lift the measurement back to the original space
    return CertifiedValue(float(value), witness={"basis": basis, "H": cols @ h_star @ cols.conj().T},
                          gap=None, converged=grad_norm <= max(tol_grad, 1e-6))


# ---------------------------------------------------------------------------
# Measured Renyi divergence: ascent over orthonormal measurement bases
# ---------------------------------------------------------------------------

def _renyi_of_basis(rho: np.ndarray, sigma: np.ndarray, u: np.ndarray, alpha: float) -> float:
    p = np.maximum(np.real(np.einsum("ij,jk,ki->i", u.conj().T, rho, u)), 0.0)
    q = np.maximum(np.real(np.einsum("ij,jk,ki->i", u.conj().T, sigma, u)), 0.0)
    return classical_renyi(p, q, alpha)


def _renyi_basis_ascent(rho: np.ndarray, sigma: np.ndarray, alpha: float, u0: np.ndarray,
                        maxiter: int = 120) -> tuple[float, np.ndarray]:
    """L-BFGS ascent over U = U0 exp(iK) with the analytic gradient in K."""
    d = rho.shape[0]
    qfloor = 1e-300

    def neg_val_grad(x: np.ndarray):
        k = _vec_to_herm(x, d)
        w, v = np.linalg.eigh(k)
        phases = np.exp(1j * w)
        wmat = (v * phases) @ v.conj().T  # exp(iK)
        u = u0 @ wmat
        p = np.maximum(np.real(np.einsum("ij,jk,ki->i", u.conj().T, rho, u)), 0.0)
        q = np.maximum(np.real(np.einsum("ij,jk,ki->i", u.conj().T, sigma, u)), qfloor)
        if alpha < 1.0:
            mask = (p > 0.0) & (q > qfloor)
            s = float((p[mask] ** alpha * q[mask] ** (1.0 - alpha)).sum())
        else:
            s = float((p ** alpha * np.maximum(q, qfloor) ** (1.0 - alpha)).sum())
        s = max(s, 1e-300)
        val = math.log(s) / (alpha - 1.0)  # nats
        # classical gradient wrt outcome probabilities
        with np.errstate(all="ignore"):
            dp = alpha * p ** (alpha - 1.0) * q ** (1.0 - alpha)
            dq = (1.0 - alpha) * p ** alpha * q ** (-alpha)
        dp[~np.isfinite(dp)] = 0.0
        dq[~np.isfinite(dq)] = 0.0
        coef = 1.0 / ((alpha - 1.0) * s)
        cp = coef * dp
        cq = coef * dq
        # chain rule through U = U0 exp(iK): d(val) = 2 Re tr[Y dW] with
        # Y = diag(cp) W* Crho + diag(cq) W* Csigma, and dW given by the
        # divided-difference table of exp(i.) in the eigenbasis of K.
        cr = u0.conj().T @ rho @ u0
        cs = u0.conj().T @ sigma @ u0
        y = cp[:, None] * (wmat.conj().T @ cr) + cq[:, None] * (wmat.conj().T @ cs)
        table = np.empty((d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                dw = w[i] - w[j]
                if abs(dw) <= 1e-12:
                    table[i, j] = 1j * np.exp(1j * 0.5 * (w[i] + w[j]))
                else:
                    table[i, j] = (phases[i] - phases[j]) / dw
        a = v.conj().T @ y @ v
        g = v @ (a * table.T) @ v.conj().T  # tr[A (T o B)] = tr[(A o T^T) B]
        grad_k = la.hermitian_part(2.0 * g)
        return -val, -_herm_to_vec(grad_k)

    res = minimize(neg_val_grad, np.zeros(d * d), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "ftol": 1e-14, "gtol": 1e-9})
    k = _vec_to_herm(res.x, d)
    w, v = np.linalg.eigh(k)
    u = u0 @ ((v * np.exp(1j * w)) @ v.conj().T)
    return _renyi_of_basis(rho, sigma, u, alpha), u


def measured_renyi(rho, sigma, alpha: float, n_starts: int = 8, seed: int = 0,
                   u0: np.ndarray | None = None) -> CertifiedValue:
    """Measured Renyi divergence over orthonormal-basis measurements.

    Multi-start ascent with multiplicative unitary perturbations; the value
    is the classical Renyi divergence of the induced outcome distributions
    and therefore a valid lower bound for any returned basis. The gap is
    unknown (flagged as None).
    """
    if alpha <= 0.0 or alpha == 1.0:
        raise ValidationError("measured_renyi requires alpha in (0,1) or (1,inf)")
    rho = _validate_state(rho, "rho")
    sigma = _validate_state(sigma, "sigma")
    if alpha > 1.0 and _support_violated(rho, sigma):
        return CertifiedValue(math.inf, witness={}, gap=None)
    d = rho.shape[0]
    rng = np.random.default_rng(seed)

    starts: list[np.ndarray] = []
    if u0 is not None:
        starts.append(u0)
    for h in (rho, sigma, rho - sigma):
        _, v = np.linalg.eigh(la.hermitian_part(h))
        starts.append(v)
    s_inv = la.mat_pow(sigma, -0.5, support_only=True)
    _, v = np.linalg.eigh(la.hermitian_part(s_inv @ rho @ s_inv))
    starts.append(v)
    while len(starts) < max(n_starts, 4):
        starts.append(la.random_unitary(d, rng.integers(2**31)))

    best_val, best_u = -math.inf, starts[0]
    for u_start in starts:
        val, u = _renyi_basis_ascent(rho, sigma, alpha, u_start)
        if val > best_val:
            best_val, best_u = val, u
    if not math.isfinite(best_val):
        best_val = _renyi_of_basis(rho, sigma, best_u, alpha)
    return CertifiedValue(float(best_val), witness={"basis": best_u}, gap=None)


def evaluate(spec: DivergenceSpec, rho, sigma, seed: int = 0) -> CertifiedValue:
    """Uniform dispatcher returning a CertifiedValue for every family."""
    fam = spec.family
    if fam == "umegaki":
        return CertifiedValue(umegaki(rho, sigma))
    if fam == "sandwiched":
        if spec.alpha == 1.0:
            return CertifiedValue(umegaki(rho, sigma))
        return CertifiedValue(sandwiched(rho, sigma, spec.alpha))
    if fam == "petz":
        return CertifiedValue(petz(rho, sigma, spec.alpha))
    if fam == "max":
        return CertifiedValue(dmax(rho, sigma))
    if fam == "hypothesis":
        return hypothesis_testing(rho, sigma, spec.epsilon)
    if fam == "measured":
        return measured_relative(rho, sigma, seed=seed)
    if fam == "measured_renyi":
        return measured_renyi(rho, sigma, spec.alpha, seed=seed)
    raise ValidationError(f"unknown family {fam!r}")
