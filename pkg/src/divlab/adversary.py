"""Adaptive and non-adaptive adversary strategies.

A strategy is a sequence of CPTP maps P^i acting on (memory, environment)
and emitting (channel input, memory). ``rollout`` alternates strategy maps
with the channel's Stinespring dilation and traces the final memory and
environment, yielding the tester-visible state on B_1..B_n. The game solver
returns certified (lower, upper) estimates of the optimal type-II error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import divergences as dv
from . import linalg as la
from .config import dim_cap
from .errors import ResourceCapError, ValidationError
from .qobjects import (QuantumMap, StinespringIsometry, adjoint_apply, apply_map,
                       as_matrix, stinespring, tensor_power_map)

__all__ = [
    "Strategy",
    "GameResult",
    "BetaBracket",
    "preparation_map",
    "rollout",
    "nonadaptive_rollout",
    "embedding_strategy",
    "beta_fixed",
    "beta_game",
    "exponent_trend",
    "mixture_strategy",
]


@dataclass(frozen=True)
class Strategy:
    """Adversary strategy: maps P^i in CPTP(R_{i-1} E_{i-1} : A_i R_i)."""

    maps: tuple[QuantumMap, ...]
    memory_dims: tuple[int, ...]

    def __post_init__(self):
        maps = tuple(self.maps)
        mems = tuple(int(d) for d in self.memory_dims)
        if len(maps) != len(mems):
            raise ValidationError("memory_dims must list |R_i| for every round")
        for m in maps:
            if not m.trace_preserving:
                raise ValidationError("strategy maps must be CPTP")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "memory_dims", mems)

    @property
    def n_rounds(self) -> int:
        return len(self.maps)

    def validate_against(self, a_dim: int, env_dim: int) -> None:
        """Check the dimension chain against the channel's input and environment."""
        r_prev, e_prev = 1, 1
        for i, m in enumerate(self.maps):
            if m.in_dim != r_prev * e_prev:
                raise ValidationError(
                    f"round {i + 1}: map input dim {m.in_dim} != |R|*|E| = {r_prev * e_prev}")
            if m.out_dim != a_dim * self.memory_dims[i]:
                raise ValidationError(
                    f"round {i + 1}: map output dim {m.out_dim} != |A|*|R| = {a_dim * self.memory_dims[i]}")
            r_prev, e_prev = self.memory_dims[i], env_dim


@dataclass
class GameResult:
    beta: float
    epsilon: float
    test_operator: Optional[np.ndarray]
    rho_n: Optional[np.ndarray]
    sigma_n: Optional[np.ndarray]
    exponent: float = math.nan
    extras: dict = field(default_factory=dict)


@dataclass
class BetaBracket:
    lower: float
    upper: float
    n: int
    epsilon: float
    model: str
    restricted: bool = False
    best_pair: Optional[GameResult] = None
    test_operator: Optional[np.ndarray] = None


def preparation_map(state) -> QuantumMap:
    """CPTP map from a trivial system preparing the given state."""
    m = as_matrix(state)
    w, v = np.linalg.eigh(la.hermitian_part(m))
    kraus = [np.sqrt(max(lam, 0.0)) * vec.reshape(-1, 1)
             for lam, vec in zip(w, v.T) if lam > 1e-14]
    return QuantumMap(tuple(kraus), trace_preserving=True)


def _b_first_isometry(dil: StinespringIsometry) -> np.ndarray:
    """Reorder the dilation output from (E, B) to (B, E)."""
    v = dil.matrix
    env, out = dil.env_dim, dil.out_dim
    v_swapped = v.reshape(env, out, dil.in_dim).transpose(1, 0, 2).reshape(env * out, dil.in_dim)
    return v_swapped


def _apply_kraus_at(state: np.ndarray, dims: list[int], kraus: Sequence[np.ndarray],
                    pos: int, n_pos: int, out_dims: list[int]) -> tuple[np.ndarray, list[int]]:
    """Apply a Kraus family to the contiguous registers [pos, pos + n_pos)."""
    before = int(np.prod(dims[:pos])) if pos else 1
    after = int(np.prod(dims[pos + n_pos:])) if pos + n_pos < len(dims) else 1
    new_dims = dims[:pos] + out_dims + dims[pos + n_pos:]
    if int(np.prod(new_dims)) > dim_cap():
        raise ResourceCapError(f"rollout would reach dimension {int(np.prod(new_dims))}")
    ib, ia = np.eye(before), np.eye(after)
    out = None
    for k in kraus:
        full = np.kron(ib, np.kron(k, ia))
        term = full @ state @ full.conj().T
        out = term if out is None else out + term
    return out, new_dims


def rollout(dilation: StinespringIsometry, strategy: Strategy) -> np.ndarray:
    """Tester-visible state on B_1..B_n after alternating strategy and dilation.

    Intermediate states keep only the live registers (B_1..B_i, R_i, E_i);
    the final memory and environment are traced out.
    """
    a_dim, b_dim, env = dilation.in_dim, dilation.out_dim, dilation.env_dim
    strategy.validate_against(a_dim, env)
    v_bf = _b_first_isometry(dilation)
    state = np.array([[1.0 + 0.0j]])
    dims = [1, 1]  # (R_0, E_0)
    n = strategy.n_rounds
    for i, p in enumerate(strategy.maps):
        r_i = strategy.memory_dims[i]
        # P^i on (R_{i-1}, E_{i-1}) -> (A_i, R_i): the last two registers
        state, dims = _apply_kraus_at(state, dims, p.kraus, len(dims) - 2, 2, [a_dim, r_i])
        # dilation on A_i -> (B_i, E_i)
        state, dims = _apply_kraus_at(state, dims, [v_bf], len(dims) - 2, 1, [b_dim, env])
        # reorder trailing (E_i, R_i) -> (R_i, E_i)
        perm = list(range(len(dims)))
        perm[-2], perm[-1] = perm[-1], perm[-2]
        state = la.permute_systems(state, dims, perm)
        dims = [dims[j] for j in perm]
    # trace out R_n and E_n
    keep = list(range(len(dims) - 2))
    state = la.partial_trace(state, dims, keep)
    return state


def nonadaptive_rollout(channel: QuantumMap, n: int, rho_in) -> np.ndarray:
    """Apply the channel to each of the n input factors of rho_in."""
    rho = as_matrix(rho_in)
    d_in = channel.in_dim
    if rho.shape[0] != d_in ** n:
        raise ValidationError(f"input must live on {n} copies of dim {d_in}")
    dims = [d_in] * n
    state = rho
    for i in range(n):
        state = apply_map(channel, state, dims=dims, which=i)
        dims[i] = channel.out_dim
    return state


def embedding_strategy(rho_in, n: int, a_dim: int, env_dim: int) -> Strategy:
    """Adaptive strategy whose rollout equals the non-adaptive input rho_in.

    Round 1 prepares rho_in on A_1 (x) R_1 with R_1 = A_2..A_n; later rounds
    discard the environment and shift the stored input registers forward.
    """
    rho = as_matrix(rho_in)
    if rho.shape[0] != a_dim ** n:
        raise ValidationError("embedded input must live on n channel-input factors")
    maps = [preparation_map(rho)]
    mems = [a_dim ** (n - 1)]
    for i in range(2, n + 1):
        r_prev = a_dim ** (n - i + 1)
        r_new = a_dim ** (n - i)
        kraus = tuple(np.kron(np.eye(r_prev), e.conj().reshape(1, -1))
                      for e in np.eye(env_dim))
        maps.append(QuantumMap(kraus, trace_preserving=True))
        mems.append(r_new)
    return Strategy(tuple(maps), tuple(mems))


def beta_fixed(rho_n, sigma_n, eps: float) -> GameResult:
    """Optimal type-II error for one fixed pair of rolled-out states."""
    cert = dv.hypothesis_testing(rho_n, sigma_n, eps)
    beta = cert.witness.get("beta", 0.0)
    return GameResult(beta=float(beta), epsilon=eps, test_operator=cert.witness.get("M"),
                      rho_n=as_matrix(rho_n), sigma_n=as_matrix(sigma_n),
                      exponent=float(cert.value), extras={"gap": cert.gap})


def _np_test_parts(rho_n: np.ndarray, sigma_n: np.ndarray, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Strict positive part and kernel projector of rho - s sigma."""
    w, v = np.linalg.eigh(la.hermitian_part(rho_n - s * sigma_n))
    band = max(1e-9 * np.abs(w).max(),
               1e-13 * float(np.abs(rho_n).max() + abs(s) * np.abs(sigma_n).max()), 1e-300)
    pos = v[:, w > band]
    ker = v[:, np.abs(w) <= band]
    return pos @ pos.conj().T, ker @ ker.conj().T


def _calibrated_test(n_pow: QuantumMap, m_pow: QuantumMap, rho_n, sigma_n, eps: float,
                     extra_alpha_states: Sequence[np.ndarray] = ()) -> tuple[np.ndarray, float, float]:
    """Best threshold test that is feasible against the whole image set.

    Worst-case errors over the non-adaptive image sets are support functions,
    i.e. extreme eigenvalues of adjoint actions, so feasibility and the
    worst-case type-II error are certified exactly. The threshold is pushed
    to the feasibility boundary and the kernel weight of the Neyman-Pearson
    family is then minimized. Returns (test, type2_worst, type1_worst).
    """
    eye = np.eye(n_pow.out_dim)

    def worst_type1(m_op):
        val = la.max_eig(adjoint_apply(n_pow, eye - m_op))
        for st in extra_alpha_states:
            val = max(val, float(np.real(np.trace(st @ (eye - m_op)))))
        return val

    def worst_type2(m_op):
        return la.max_eig(adjoint_apply(m_pow, m_op))

    def closed(s):
        pos, ker = _np_test_parts(rho_n, sigma_n, s)
        return pos + ker

    s_lo, s_hi = 0.0, 1e-4
    while worst_type1(closed(s_hi)) <= eps and s_hi < 1e12:
        s_lo = s_hi
        s_hi *= 4.0
    for _ in range(80):
        mid = 0.5 * (s_lo + s_hi)
        if worst_type1(closed(mid)) <= eps:
            s_lo = mid
        else:
            s_hi = mid
    pos, ker = _np_test_parts(rho_n, sigma_n, s_lo)
    c_lo, c_hi = 0.0, 1.0
    if worst_type1(pos) <= eps:
        c_hi = 0.0
    else:
        for _ in range(60):
            c_mid = 0.5 * (c_lo + c_hi)
            if worst_type1(pos + c_mid * ker) <= eps:
                c_hi = c_mid
            else:
                c_lo = c_mid
    test = pos + c_hi * ker
    return test, worst_type2(test), worst_type1(test)


def beta_game(n_ch: QuantumMap, m_ch: QuantumMap, n: int, eps: float,
              model: str = "nonadaptive", rounds: int = 12, mem_cap: int = 4,
              seed: int = 0, ascent_steps: int = 60) -> BetaBracket:
    """Saddle estimation of the optimal type-II error beta_{n, eps}.

    The lower estimate is the best Neyman-Pearson value over explored
    adversary output pairs (every pair certifies a lower bound). The upper
    estimate is the worst-case type-II error of a threshold test calibrated
    to be feasible against the whole non-adaptive image set (a support
    function, computed exactly); for the adaptive model the calibration also
    covers the explored memory-capped strategies and the result is flagged
    as a restricted-adversary estimate.
    """
    if model not in ("nonadaptive", "adaptive"):
        raise ValidationError("model must be nonadaptive or adaptive")
    n_pow = tensor_power_map(n_ch, n) if n > 1 else n_ch
    m_pow = tensor_power_map(m_ch, n) if n > 1 else m_ch
    d_in_n = n_pow.in_dim
    rng = np.random.default_rng(seed)

    # the Stein-optimal pair (minimum output relative entropy) is the natural
    # adversary opening: it maximizes the pairwise Neyman-Pearson error
    from .channel_div import min_output

    rho_in = np.eye(d_in_n, dtype=complex) / d_in_n
    sigma_in = np.eye(d_in_n, dtype=complex) / d_in_n
    best = beta_fixed(n_pow(rho_in), m_pow(sigma_in), eps)
    try:
        mo = min_output(n_ch, m_ch, family="umegaki", n=n, tol=1e-7, restarts=1, seed=seed)
        cand = beta_fixed(n_pow(mo.rho_star), m_pow(mo.sigma_star), eps)
        if cand.beta > best.beta:
            best, rho_in, sigma_in = cand, mo.rho_star, mo.sigma_star
    except Exception:
        pass
    test, upper, _ = _calibrated_test(n_pow, m_pow, best.rho_n, best.sigma_n, eps)

    for k in range(rounds):
        # adversary best responses against the current test (linear in inputs)
        v_sigma = np.linalg.eigh(la.hermitian_part(adjoint_apply(m_pow, test)))[1][:, -1]
        v_rho = np.linalg.eigh(la.hermitian_part(
            adjoint_apply(n_pow, np.eye(n_pow.out_dim) - test)))[1][:, -1]
        cand_sigmas = [sigma_in, np.outer(v_sigma, v_sigma.conj()),
                       0.5 * sigma_in + 0.5 * np.outer(v_sigma, v_sigma.conj())]
        cand_rhos = [rho_in, np.outer(v_rho, v_rho.conj()),
                     0.5 * rho_in + 0.5 * np.outer(v_rho, v_rho.conj())]
        improved = False
        for r_c in cand_rhos:
            for s_c in cand_sigmas:
                res = beta_fixed(n_pow(r_c), m_pow(s_c), eps)
                if res.beta > best.beta + 1e-14:
                    best, rho_in, sigma_in = res, r_c, s_c
                    improved = True
        test_k, upper_k, _ = _calibrated_test(n_pow, m_pow, best.rho_n, best.sigma_n, eps)
        if upper_k < upper:
            upper, test = upper_k, test_k
        if not improved and k >= 2:
            break

    restricted = False
    if model == "adaptive":
        restricted = True
        dil_n = stinespring(n_ch, minimal=True)
        dil_m = stinespring(m_ch, minimal=True)
        # seed with the embedding of the best non-adaptive inputs
        strat_p = embedding_strategy(rho_in, n, n_ch.in_dim, dil_n.env_dim)
        strat_q = embedding_strategy(sigma_in, n, m_ch.in_dim, dil_m.env_dim)
        strat_p = _pad_strategy_memory(strat_p, tuple(min(max(d, 1), mem_cap) if i < n - 1 else d
                                                      for i, d in enumerate(strat_p.memory_dims)))
        rho_nn = rollout(dil_n, strat_p)
        sigma_nn = rollout(dil_m, strat_q)
        res = beta_fixed(rho_nn, sigma_nn, eps)
        if res.beta > best.beta:
            best = res
        adaptive_outputs = [rho_nn]
        for step in range(ascent_steps):
            cand_p = _perturb_strategy(strat_p, rng, scale=0.35 / math.sqrt(step + 1.0))
            cand_q = _perturb_strategy(strat_q, rng, scale=0.35 / math.sqrt(step + 1.0))
            r_out = rollout(dil_n, cand_p)
            s_out = rollout(dil_m, cand_q)
            res = beta_fixed(r_out, s_out, eps)
            if res.beta > best.beta:
                best, strat_p, strat_q = res, cand_p, cand_q
                adaptive_outputs.append(r_out)
        test_a, upper_a, _ = _calibrated_test(n_pow, m_pow, best.rho_n, best.sigma_n, eps,
                                              extra_alpha_states=adaptive_outputs)
        if upper_a > upper:
            upper, test = upper_a, test_a

    lower = best.beta
    best.exponent = math.inf if lower <= 0 else -math.log2(lower) / n
    return BetaBracket(lower=float(lower), upper=float(upper), n=n, epsilon=eps,
                       model=model, restricted=restricted, best_pair=best,
                       test_operator=test)


def _perturb_strategy(strategy: Strategy, rng, scale: float) -> Strategy:
    """Random Stiefel step on one strategy map's Stinespring isometry."""
    idx = int(rng.integers(strategy.n_rounds))
    m = strategy.maps[idx]
    dil = stinespring(m)
    v = dil.matrix
    g = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
    u, _, wt = np.linalg.svd(v + scale * g, full_matrices=False)
    v_new = u @ wt  # polar retraction back to the isometry manifold
    env, out = dil.env_dim, dil.out_dim
    kraus = tuple(v_new[e * out:(e + 1) * out, :] for e in range(env))
    maps = list(strategy.maps)
    maps[idx] = QuantumMap(kraus, trace_preserving=True)
    return Strategy(tuple(maps), strategy.memory_dims)


def exponent_trend(n_ch: QuantumMap, m_ch: QuantumMap, eps: float, n_list: Sequence[int],
                   bracket=None, seed: int = 0) -> list[dict]:
    """Per-n non-adaptive error-exponent estimates next to the regularization bracket."""
    from .channel_div import regularization_bracket

    if bracket is None:
        bracket = regularization_bracket(n_ch, m_ch, alpha=1.0, n_max=min(2, max(n_list)), seed=seed)
    rows = []
    for n in n_list:
        game = beta_game(n_ch, m_ch, n, eps, model="nonadaptive", seed=seed)
        rows.append({
            "n": n,
            "beta_lower": game.lower,
            "beta_upper": game.upper,
            "exponent_lower": math.inf if game.upper <= 0 else -math.log2(game.upper) / n,
            "exponent_upper": math.inf if game.lower <= 0 else -math.log2(game.lower) / n,
            "bracket_lower": bracket.lower,
            "bracket_upper": bracket.upper,
        })
    return rows


# ---------------------------------------------------------------------------
# Strategy mixtures: the classical-flag construction behind convexity
# ---------------------------------------------------------------------------

def _pad_strategy_memory(strategy: Strategy, new_dims: tuple[int, ...]) -> Strategy:
    """Embed memories into larger registers (a truncation channel completes CPTP)."""
    if tuple(new_dims) == strategy.memory_dims:
        return strategy
    maps = []
    r_prev_old, r_prev_new = 1, 1
    a_dim_by_round = [m.out_dim // strategy.memory_dims[i] for i, m in enumerate(strategy.maps)]
    for i, m in enumerate(strategy.maps):
        r_old, r_new = strategy.memory_dims[i], int(new_dims[i])
        if r_new < r_old:
            raise ValidationError("padding cannot shrink a memory register")
        a_dim = a_dim_by_round[i]
        out_embed = np.zeros((a_dim * r_new, a_dim * r_old))
        for a in range(a_dim):
            out_embed[a * r_new:a * r_new + r_old, a * r_old:(a + 1) * r_old] = np.eye(r_old)
        if r_prev_new == r_prev_old:
            kraus = tuple(out_embed @ k for k in m.kraus)
        else:
            e_dim = m.in_dim // r_prev_old
            embed_in = np.zeros((r_prev_new, r_prev_old))
            embed_in[:r_prev_old, :] = np.eye(r_prev_old)
            compress = np.kron(embed_in.T, np.eye(e_dim))
            kraus = [out_embed @ k @ compress for k in m.kraus]
            # complete to CPTP: route the unsupported memory sector to a fixed output
            comp_dim = r_prev_new - r_prev_old
            if comp_dim > 0:
                fixed = np.zeros((a_dim * r_new, 1))
                fixed[0, 0] = 1.0
                basis_perp = np.zeros((r_prev_new, comp_dim))
                basis_perp[r_prev_old:, :] = np.eye(comp_dim)
                for j in range(comp_dim):
                    for e in range(e_dim):
                        bra = np.kron(basis_perp[:, j:j + 1], np.eye(e_dim)[:, e:e + 1]).conj().T
                        kraus.append(fixed @ bra)
            kraus = tuple(kraus)
        maps.append(QuantumMap(kraus, trace_preserving=True))
        r_prev_old, r_prev_new = r_old, r_new
    return Strategy(tuple(maps), tuple(int(d) for d in new_dims))


def mixture_strategy(s1: Strategy, s2: Strategy, lam: float) -> Strategy:
    """Classical-flag mixture: doubled memory R_i (x) C with controlled branches.

    The rollout of the mixture equals lam * rollout(s1) + (1-lam) * rollout(s2)
    exactly; mismatched memory dimensions are reconciled by padding.
    """
    if not (0.0 <= lam <= 1.0):
        raise ValidationError("mixture weight must lie in [0, 1]")
    if s1.n_rounds != s2.n_rounds:
        raise ValidationError("strategies must have the same number of rounds")
    n = s1.n_rounds
    dims = tuple(max(a, b) for a, b in zip(s1.memory_dims, s2.memory_dims))
    s1 = _pad_strategy_memory(s1, dims)
    s2 = _pad_strategy_memory(s2, dims)
    a_dims = [m.out_dim // dims[i] for i, m in enumerate(s1.maps)]
    if [m.out_dim // dims[i] for i, m in enumerate(s2.maps)] != a_dims:
        raise ValidationError("strategies address different channel input dimensions")

    maps = []
    e0 = np.array([[1.0], [0.0]])
    e1 = np.array([[0.0], [1.0]])
    # round 1: branch flag written next to the fresh memory
    k1 = [np.sqrt(lam) * np.kron(k, e0) for k in s1.maps[0].kraus]
    k1 += [np.sqrt(1.0 - lam) * np.kron(k, e1) for k in s2.maps[0].kraus]
    maps.append(QuantumMap(tuple(k1), trace_preserving=True))
    for i in range(1, n):
        r_prev = dims[i - 1]
        e_dim = s1.maps[i].in_dim // r_prev
        ki = []
        for branch, strat in ((e0, s1), (e1, s2)):
            # input (R, C, E): read the flag, act with the branch map, rewrite the flag
            read = np.kron(np.kron(np.eye(r_prev), branch.conj().T), np.eye(e_dim))
            for k in strat.maps[i].kraus:
                ki.append(np.kron(k, branch) @ read)
        maps.append(QuantumMap(tuple(ki), trace_preserving=True))
    return Strategy(tuple(maps), tuple(d * 2 for d in dims))