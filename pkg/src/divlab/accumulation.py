"""Divergence accumulation for sequential channel processes.

Implements the accumulation bound with the proof-explicit finite-size
constants (block length m, Renyi order alpha, and the sublinear penalty),
its condition check, the conditional-entropy corollary machinery, and the
auxiliary inequalities it rests on: the Petz-3/2 bound for the twisted
conditional state, the fidelity test-operator bound, and the max-entropy
witness inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import divergences as dv
from . import linalg as la
from .config import LN2
from .errors import ResourceCapError, ValidationError
from .optimize import solve_density_program
from .qobjects import QuantumMap, adjoint_apply, apply_map, as_matrix

__all__ = [
    "AccumulationReport",
    "SigmaAlphaWitness",
    "SequentialChannel",
    "dilation_step",
    "memoryless_step",
    "sequential_rollout",
    "accumulation_constants",
    "reat_bound",
    "sigma_alpha",
    "check_petz32_bound",
    "check_fidelity_bound",
    "hmax_witness",
    "conditional_entropy",
    "conditional_entropy_variational",
    "max_conditional_entropy",
    "eat_corollary_check",
    "check_condition",
]


@dataclass
class AccumulationReport:
    n: int
    lhs: Optional[float]
    rhs_sum: float
    correction: float
    m_choice: int
    alpha_choice: float
    C: float
    holds: Optional[bool]
    cprime: Optional[float] = None
    per_step: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)


@dataclass
class SigmaAlphaWitness:
    alpha: float
    sigma_b: np.ndarray
    Z: float


@dataclass(frozen=True)
class SequentialChannel:
    """CP map A_i -> (A_{i+1}, B_i) with the declared output split."""

    channel: QuantumMap
    mem_out: int
    emit_out: int

    def __post_init__(self):
        if self.mem_out * self.emit_out != self.channel.out_dim:
            raise ValidationError("output split does not match the channel output dimension")

    @property
    def marginal(self) -> QuantumMap:
        """The emitted-system marginal tr_{A_{i+1}} o channel as a Kraus map."""
        kraus = []
        for e in range(self.mem_out):
            bra = np.zeros((1, self.mem_out))
            bra[0, e] = 1.0
            proj = np.kron(bra, np.eye(self.emit_out))
            for k in self.channel.kraus:
                kraus.append(proj @ k)
        return QuantumMap(tuple(kraus))


def dilation_step(ch: QuantumMap, minimal: bool = True) -> SequentialChannel:
    """Sequential step from a Stinespring dilation: memory = environment.

    Chains with itself only when the environment dimension matches the
    channel input dimension; the emitted marginal is exactly the channel.
    """
    from .qobjects import stinespring

    dil = stinespring(ch, minimal=minimal)
    return SequentialChannel(QuantumMap((dil.matrix,), trace_preserving=ch.trace_preserving or None),
                             mem_out=dil.env_dim, emit_out=dil.out_dim)


def memoryless_step(ch: QuantumMap, mem_dim: Optional[int] = None) -> SequentialChannel:
    """Sequential step emitting ch(X) with a fresh fixed memory register."""
    mem = ch.in_dim if mem_dim is None else mem_dim
    e0 = np.zeros((mem, 1))
    e0[0, 0] = 1.0
    kraus = tuple(np.kron(e0, k) for k in ch.kraus)
    return SequentialChannel(QuantumMap(kraus, trace_preserving=ch.trace_preserving or None),
                             mem_out=mem, emit_out=ch.out_dim)


def sequential_rollout(steps: Sequence[SequentialChannel], rho0) -> np.ndarray:
    """Fold the sequential process; returns the state on B_1..B_n."""
    state = as_matrix(rho0)
    dims = [state.shape[0]]
    for step in steps:
        if dims[-1] != step.channel.in_dim:
            raise ValidationError("memory dimension chain broken in sequential rollout")
        state = apply_map(step.channel, state, dims=dims, which=len(dims) - 1)
        dims = dims[:-1] + [step.mem_out, step.emit_out]
        # keep emitted systems in order, memory last
        perm = list(range(len(dims)))
        perm[-2], perm[-1] = perm[-1], perm[-2]
        state = la.permute_systems(state, dims, perm)
        dims[-2], dims[-1] = dims[-1], dims[-2]
    state = la.partial_trace(state, dims, list(range(len(dims) - 1)))
    return state


def accumulation_constants(n: int, d: int, eps: float, C: float,
                           m_override: Optional[int] = None) -> tuple[int, float, float, Optional[float]]:
    """Block length, Renyi order, and the explicit sublinear penalty.

    m follows the proof's choice (64 d^4 n / ((2+C)^2 log(1/eps)))^(1/3),
    raised to the floor max(d, (16 d^2 / (2+C))^2) the proof requires; the
    penalty is n * 16 d^2 log(m)/m + (2+C)^2 m^2 / (8 d^2 log m) * log(1/eps).
    Logarithms are base 2 throughout the reported quantities.
    """
    if not (0.0 < eps < 1.0):
        raise ValidationError("eps must lie in (0,1)")
    log_eps = math.log2(1.0 / eps)
    m_formula = (64.0 * d**4 * n / ((2.0 + C) ** 2 * log_eps)) ** (1.0 / 3.0)
    m_floor = max(d, (16.0 * d * d / (2.0 + C)) ** 2, 2.0)
    m = int(math.ceil(max(m_formula, m_floor))) if m_override is None else int(m_override)
    if m < 2:
        raise ValidationError("block length m must be at least 2")
    log_m = math.log2(m)
    alpha = 1.0 - 8.0 * d * d * log_m / ((2.0 + C) ** 2 * m * m)
    correction = n * 16.0 * d * d * log_m / m + (2.0 + C) ** 2 * m * m / (8.0 * d * d * log_m) * log_eps
    cprime = None
    if n >= 2:
        cprime = correction / (n ** (2.0 / 3.0) * math.log2(n) * log_eps ** (1.0 / 3.0))
    return m, alpha, correction, cprime


def reat_bound(steps_n: Sequence[SequentialChannel], steps_m: Sequence[SequentialChannel],
               rho0, sigma0, eps: float, C: float, m_override: Optional[int] = None,
               n_max_bracket: int = 1, seed: int = 0, check: bool = True,
               tol: float = 1e-6) -> AccumulationReport:
    """Accumulation bound with explicit constants for two sequential processes.

    lhs: hypothesis-testing divergence of the rolled-out emitted systems.
    rhs_sum: per-step certified lower ends of the regularization brackets of
    the emitted-marginal channel pairs. The per-proof penalty uses the
    quoted block length (raised to its validity floor); ``holds`` evaluates
    lhs >= rhs_sum - correction - tol.
    """
    from .channel_div import regularization_bracket

    if len(steps_n) != len(steps_m):
        raise ValidationError("the two sequences must have equal length")
    n = len(steps_n)
    d = max(max(s.emit_out for s in steps_n), max(s.emit_out for s in steps_m))
    m, alpha, correction, cprime = accumulation_constants(n, d, eps, C, m_override)

    per_step = []
    rhs = 0.0
    for i, (sn, sm) in enumerate(zip(steps_n, steps_m)):
        if sn.channel.in_dim != sm.channel.in_dim or sn.emit_out != sm.emit_out:
            raise ValidationError(f"step {i + 1}: the two processes disagree on dimensions")
        br = regularization_bracket(sn.marginal, sm.marginal, alpha=1.0,
                                    n_max=n_max_bracket, family="umegaki", seed=seed)
        per_step.append({"step": i + 1, "lower": br.lower, "upper": br.upper})
        rhs += br.lower

    lhs = None
    holds = None
    condition_ok = None
    if check:
        condition_ok = all(
            check_condition(sn.marginal, sm.marginal, m_list=(1,), C=C, seed=seed)[0]
            for sn, sm in zip(steps_n, steps_m))
    try:
        rho_n = sequential_rollout(steps_n, rho0)
        sigma_n = sequential_rollout(steps_m, sigma0)
        cert = dv.hypothesis_testing(rho_n, sigma_n, eps)
        lhs = cert.value
        holds = bool(lhs >= rhs - correction - tol)
    except ResourceCapError:
        pass
    return AccumulationReport(n=n, lhs=lhs, rhs_sum=float(rhs), correction=float(correction),
                              m_choice=m, alpha_choice=float(alpha), C=float(C), holds=holds,
                              cprime=cprime, per_step=per_step,
                              extras={"condition_ok": condition_ok, "eps": eps})


def sigma_alpha(rho_ab, alpha: float, dims: tuple[int, int]) -> SigmaAlphaWitness:
    """Twisted conditional marginal (tr_A rho^alpha)^(1/alpha) / Z."""
    if not (0.5 <= alpha <= 1.0):
        raise ValidationError("alpha must lie in [1/2, 1]")
    rho = as_matrix(rho_ab)
    d_a, d_b = dims
    if rho.shape[0] != d_a * d_b:
        raise ValidationError("dims do not match the state")
    rho_pow = la.mat_pow(rho, alpha, support_only=True)
    marg = la.partial_trace(rho_pow, [d_a, d_b], [1])
    lifted = la.mat_pow(marg, 1.0 / alpha, support_only=True)
    z = float(np.trace(lifted).real)
    return SigmaAlphaWitness(alpha=alpha, sigma_b=lifted / z, Z=z)


def check_petz32_bound(rho_ab, alpha: float, dims: tuple[int, int]) -> tuple[float, float, bool]:
    """Petz-3/2 divergence against id_A (x) twisted marginal vs 4 log2 d_A."""
    d_a, d_b = dims
    wit = sigma_alpha(rho_ab, alpha, dims)
    target = np.kron(np.eye(d_a), wit.sigma_b)
    value = dv.petz(as_matrix(rho_ab), target, 1.5)
    bound = 4.0 * math.log2(d_a)
    return value, bound, bool(value <= bound + 1e-8)


def check_fidelity_bound(rho, sigma, m_op) -> tuple[float, float, bool]:
    """|| (sqrt(M) rho sqrt(M))^(1/2) sigma^(1/2) ||_1^2 <= tr(M sigma)."""
    rho = as_matrix(rho)
    sigma = as_matrix(sigma)
    m_op = la.check_hermitian(as_matrix(m_op), "M")
    w = np.linalg.eigvalsh(m_op)
    if w.min() < -1e-9 or w.max() > 1.0 + 1e-9:
        raise ValidationError("test operator must satisfy 0 <= M <= I")
    sm = la.mat_sqrt(m_op)
    pinched = la.hermitian_part(sm @ rho @ sm)
    lhs = la.trace_norm(la.mat_sqrt(pinched) @ la.mat_sqrt(sigma)) ** 2
    rhs = float(np.real(np.trace(m_op @ sigma)))
    return float(lhs), rhs, bool(lhs <= rhs + 1e-9)


# ---------------------------------------------------------------------------
# Conditional entropies and the max-entropy witness
# ---------------------------------------------------------------------------

def conditional_entropy(rho_sc, dims: tuple[int, int]) -> float:
    """H(S|C) = H(SC) - H(C) in bits."""
    rho = as_matrix(rho_sc)
    d_s, d_c = dims
    rho_c = la.partial_trace(rho, [d_s, d_c], [1])
    return la.von_neumann_entropy(rho) - la.von_neumann_entropy(rho_c)


def conditional_entropy_variational(rho_sc, dims: tuple[int, int], tol: float = 1e-7,
                                    seed: int = 0) -> float:
    """-inf_sigma D(rho_SC || id_S (x) sigma_C) via certified Frank-Wolfe."""
    rho = as_matrix(rho_sc)
    d_s, d_c = dims
    rho_c = la.partial_trace(rho, [d_s, d_c], [1])

    def vg(mats):
        sigma = mats[0]
        target = np.kron(np.eye(d_s), sigma)
        val = dv._support_violated(rho, target)
        if val:
            return math.inf, [np.zeros((d_c, d_c), dtype=complex)]
        v_nats = float(np.real(np.trace(rho @ (la.mat_log(rho, support_only=True)
                                               - la.mat_log(target, support_only=True)))))
        w, v = np.linalg.eigh(la.hermitian_part(sigma))
        w = np.maximum(w, 1e-300)
        mult = la.frechet_multiplier(w, v, np.log, lambda x: 1.0 / x)
        grad = -la.hermitian_part(mult(rho_c))
        return v_nats, [grad]

    prog = solve_density_program(vg, [d_c], sense="min", tol=tol, max_iter=2000,
                                 restarts=1, seed=seed, init=[rho_c])
    return -prog.value / LN2


def max_conditional_entropy(step: SequentialChannel, dims_out: tuple[int, int],
                            tol: float = 1e-7, seed: int = 0) -> tuple[float, np.ndarray]:
    """sup over inputs of H(S|C) of the emitted output (concave maximization)."""
    d_s, d_c = dims_out
    chan = step.channel
    d_y = step.mem_out

    def emitted(omega):
        out = chan(omega)
        return la.partial_trace(out, [d_y, d_s, d_c], [1, 2])

    def vg(mats):
        omega = mats[0]
        sc = emitted(omega)
        c = la.partial_trace(sc, [d_s, d_c], [1])
        val = la.von_neumann_entropy(sc) - la.von_neumann_entropy(c)  # bits
        # gradient of H(SC)-H(C) in nats through the linear map, then rescaled
        g_sc = -(la.mat_log(sc, support_only=True) + np.eye(sc.shape[0]))
        g_c = la.mat_log(c, support_only=True) + np.eye(c.shape[0])
        lift = g_sc + np.kron(np.eye(d_s), g_c)
        full = np.kron(np.eye(d_y), lift)
        grad = adjoint_apply(chan, full) / LN2
        return val, [la.hermitian_part(grad)]

    prog = solve_density_program(vg, [chan.in_dim], sense="max", tol=tol,
                                 max_iter=2000, restarts=2, seed=seed)
    return prog.value, prog.mats[0]


def hmax_witness(rho_bc, eps: float, dims: tuple[int, int], seed: int = 0,
                 tol: float = 1e-8) -> tuple[float, float, bool]:
    """Smoothed max-entropy witness versus the conditional hypothesis-testing bound.

    dh_value = inf over sigma_C of D_H,eps(rho_BC || id_B (x) sigma_C) (outer
    minimization of a convex function with witness subgradients). The upper
    witness applies the gentle measurement to the optimal test, rho~ =
    sqrt(M) rho sqrt(M), and maximizes log2 F^2(rho~, id (x) sigma) over
    sigma; ``holds`` checks hmax_upper <= -dh_value + 1e-6.
    """
    rho = as_matrix(rho_bc)
    d_b, d_c = dims
    if rho.shape[0] != d_b * d_c:
        raise ValidationError("dims do not match the state")
    rho_c = la.partial_trace(rho, [d_b, d_c], [1])

    cert_holder = {}

    def dh_of(sigma):
        cert = dv.hypothesis_testing(rho, np.kron(np.eye(d_b), sigma), eps)
        cert_holder["cert"] = cert
        return cert

    def vg(mats):
        sigma = mats[0]
        cert = dh_of(sigma)
        if not math.isfinite(cert.value):
            return math.inf, [np.zeros((d_c, d_c), dtype=complex)]
        beta = max(cert.witness["beta"], 1e-300)
        grad = -la.partial_trace(cert.witness["M"], [d_b, d_c], [1]) / beta  # nats
        return cert.value * LN2, [la.hermitian_part(grad)]

    # quasi-Newton drive with a one-shot FW-gap certificate: the objective is
    # convex in sigma, so the polished point plus gap certifies the minimum
    prog = solve_density_program(vg, [d_c], sense="min", tol=tol, max_iter=0,
                                 restarts=2, seed=seed, init=[rho_c])
    sigma_star = prog.mats[0]
    cert = dh_of(sigma_star)
    dh_value = cert.value
    m_op = cert.witness["M"]

    sm = la.mat_sqrt(m_op)
    rho_tilde = la.hermitian_part(sm @ rho @ sm)
    rt_half = la.mat_sqrt(rho_tilde)

    def vg_f(mats):
        sigma = mats[0]
        target = np.kron(np.eye(d_b), sigma) + 1e-13 * np.eye(d_b * d_c)
        x = la.hermitian_part(rt_half @ target @ rt_half)
        w, v = np.linalg.eigh(x)
        w = np.maximum(w, 1e-300)
        f_val = float(np.sqrt(w).sum())
        x_inv_half = (v * (1.0 / np.sqrt(w))) @ v.conj().T
        core = la.hermitian_part(rt_half @ x_inv_half @ rt_half)
        grad = 0.5 * la.partial_trace(core, [d_b, d_c], [1])
        return f_val, [la.hermitian_part(grad)]

    prog_f = solve_density_program(vg_f, [d_c], sense="max", tol=1e-9, max_iter=80,
                                   restarts=1, seed=seed, init=[rho_c], polish_every=20)
    f_star = prog_f.value
    hmax_upper = 2.0 * math.log2(max(f_star, 1e-300))
    holds = bool(hmax_upper <= -dh_value + 1e-6)
    return float(hmax_upper), float(dh_value), holds


def eat_corollary_check(steps: Sequence[SequentialChannel], rho_y0, eps: float,
                        seed: int = 0, dims_sc: Sequence[tuple[int, int]] | None = None) -> dict:
    """Conditional-entropy accumulation: max-entropy witness vs per-step suprema.

    Each step is CPTP Y_{i-1} -> (Y_i, S_i C_i) with the (S_i, C_i) split
    given by ``dims_sc``. Builds the emitted outputs, the per-step suprema of
    H(S_i|C_i), the explicit correction with C = 16 max_i log2 dim S_i, and
    the gentle-measurement max-entropy witness of the total output.
    """
    n = len(steps)
    if dims_sc is None or len(dims_sc) != n:
        raise ValidationError("dims_sc must give the (S_i, C_i) split per step")
    rho = as_matrix(rho_y0)
    sup_sum = 0.0
    for step, (d_s, d_c) in zip(steps, dims_sc):
        val, _ = max_conditional_entropy(step, (d_s, d_c), seed=seed)
        sup_sum += val

    out = sequential_rollout(steps, rho)  # on (S_1 C_1) .. (S_n C_n)
    flat_dims = []
    for d_s, d_c in dims_sc:
        flat_dims.extend([d_s, d_c])
    perm = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    out_grouped = la.permute_systems(out, flat_dims, perm)
    d_bs = int(np.prod([d[0] for d in dims_sc]))
    d_cs = int(np.prod([d[1] for d in dims_sc]))

    d = max(d_s * d_c for d_s, d_c in dims_sc)
    c_const = 16.0 * max(math.log2(d_s) for d_s, _ in dims_sc)
    if c_const <= 0:
        c_const = 16.0
    m, alpha, correction, cprime = accumulation_constants(n, d, eps, c_const)
    hm_upper, dh_value, _ = hmax_witness(out_grouped, eps, (d_bs, d_cs), seed=seed)
    holds = bool(hm_upper <= sup_sum + correction + 1e-6)
    return {"n": n, "hmax_upper": hm_upper, "dh_value": dh_value, "sup_sum": sup_sum,
            "correction": correction, "m": m, "alpha": alpha, "C": c_const,
            "holds": holds, "cprime": cprime}


def check_condition(channel_n: QuantumMap, channel_m: QuantumMap, m_list: Sequence[int] = (1, 2),
                    C: float = 8.0, seed: int = 0,
                    alphas: Sequence[float] = (0.5, 0.75, 1.0)) -> tuple[bool, dict]:
    """Both clauses of the accumulation condition at the given block lengths.

    Clause 1 evaluates the Petz-3/2 divergence between the minimum-output
    optimizer pairs at m copies (Petz objective at each alpha on the grid)
    against C m / 4. Clause 2 bounds the trace growth of the second map:
    log2 of the largest trace it produces must stay below C / 4.
    """
    from .channel_div import min_output

    details: dict = {"clause2": None, "clause1": []}
    trace_bound = channel_m.log2_trace_bound()
    details["clause2"] = trace_bound
    if trace_bound > C / 4.0:
        details["violation"] = f"log2 trace bound {trace_bound:.4f} exceeds C/4 = {C / 4.0:.4f}"
        return False, details
    ok = True
    for m in m_list:
        for alpha in alphas:
            if alpha == 1.0:
                res = min_output(channel_n, channel_m, family="umegaki", n=m, seed=seed)
            else:
                res = min_output(channel_n, channel_m, family="petz", alpha=alpha, n=m, seed=seed)
            rho_m = res.rho_star
            sigma_m = res.sigma_star
            n_pow = channel_n if m == 1 else None
            if m == 1:
                out_r, out_s = channel_n(rho_m), channel_m(sigma_m)
            else:
                from .qobjects import tensor_power_map
                n_pow = tensor_power_map(channel_n, m)
                m_pow = tensor_power_map(channel_m, m)
                out_r, out_s = n_pow(rho_m), m_pow(sigma_m)
            val = dv.petz(out_r, out_s, 1.5)
            bound = C * m / 4.0
            details["clause1"].append({"m": m, "alpha": alpha, "value": val, "bound": bound})
            if not (val <= bound + 1e-8):
                ok = False
                details["violation"] = f"Petz-3/2 at m={m}, alpha={alpha}: {val:.4f} > {bound:.4f}"
    return ok, details
