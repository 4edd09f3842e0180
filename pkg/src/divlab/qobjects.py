"""Quantum states and completely positive maps.

States are validated density operators; maps are stored in Kraus form with
derived Choi matrices and Stinespring isometries. Includes the named channel
constructions used throughout (generalized amplitude damping, replacers) and
the JSON channel-spec wire format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg as la
from .config import TOL_PSD, TOL_RANK, TOL_TRACE, dim_cap
from .errors import ResourceCapError, ValidationError

__all__ = [
    "DensityOperator",
    "QuantumMap",
    "StinespringIsometry",
    "as_matrix",
    "density",
    "apply_map",
    "adjoint_apply",
    "choi",
    "kraus_from_choi",
    "minimal_kraus",
    "stinespring",
    "identity_channel",
    "unitary_channel",
    "gad_channel",
    "replacer_channel",
    "tensor_map",
    "tensor_power_map",
    "map_to_json",
    "map_from_json",
    "load_channel",
    "matrix_to_json",
    "matrix_from_json",
    "load_state",
]


def as_matrix(x) -> np.ndarray:
    """Accept either a raw ndarray or a wrapper carrying ``.mat``."""
    return np.asarray(getattr(x, "mat", x), dtype=complex)


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian PSD matrix with unit trace (or trace <= 1 if subnormalized)."""

    mat: np.ndarray
    subnormalized: bool = False

    def __post_init__(self):
        m = la.check_hermitian(np.asarray(self.mat, dtype=complex), "density operator")
        low = la.min_eig(m)
        if low < -TOL_PSD:
            raise ValidationError(f"density operator has negative eigenvalue {low:.3e}")
        tr = float(np.trace(m).real)
        if self.subnormalized:
            if tr > 1.0 + TOL_TRACE or tr < -TOL_TRACE:
                raise ValidationError(f"subnormalized state must have trace in [0, 1], got {tr}")
        elif abs(tr - 1.0) > TOL_TRACE:
            raise ValidationError(f"density operator must have unit trace, got {tr}")
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


def density(mat, subnormalized: bool = False) -> DensityOperator:
    return DensityOperator(as_matrix(mat), subnormalized=subnormalized)


@dataclass(frozen=True)
class QuantumMap:
    """Completely positive map in Kraus form.

    ``trace_preserving`` maps must satisfy ``sum A_i* A_i = I``; general CP
    maps carry no trace constraint (trace non-increasing is *not* required),
    only the boundedness witness ``log2_trace_bound``.
    """

    kraus: tuple[np.ndarray, ...]
    trace_preserving: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        if not ops:
            raise ValidationError("a quantum map needs at least one Kraus operator")
        out_dim, in_dim = ops[0].shape
        for k in ops:
            if k.shape != (out_dim, in_dim):
                raise ValidationError("all Kraus operators must share the same shape")
            la.check_finite(k, "Kraus operator")
        gram = sum(k.conj().T @ k for k in ops)
        dev = np.abs(gram - np.eye(in_dim)).max()
        tp = dev <= 1e-9 if self.trace_preserving is None else self.trace_preserving
        if self.trace_preserving and dev > 1e-9:
            raise ValidationError(f"map declared trace-preserving but sum A*A deviates from I by {dev:.3e}")
        object.__setattr__(self, "kraus", ops)
        object.__setattr__(self, "trace_preserving", bool(tp))

    @property
    def in_dim(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.kraus[0].shape[0]

    def __call__(self, rho) -> np.ndarray:
        return apply_map(self, rho)

    def adjoint(self, x) -> np.ndarray:
        return adjoint_apply(self, x)

    def log2_trace_bound(self) -> float:
        """log2 of the largest trace the map can produce on a density input."""
        gram = sum(k.conj().T @ k for k in self.kraus)
        return float(np.log2(max(la.max_eig(gram), 1e-300)))


@dataclass(frozen=True)
class StinespringIsometry:
    """V = sum_i |i>_E (x) A_i, environment indexed by Kraus index (env first)."""

    matrix: np.ndarray
    env_dim: int
    out_dim: int
    in_dim: int
    trace_preserving: bool = False

    def __post_init__(self):
        v = np.asarray(self.matrix, dtype=complex)
        if v.shape != (self.env_dim * self.out_dim, self.in_dim):
            raise ValidationError(f"Stinespring matrix shape {v.shape} inconsistent with dims")
        if self.trace_preserving:
            dev = np.abs(v.conj().T @ v - np.eye(self.in_dim)).max()
            if dev > 1e-9:
                raise ValidationError(f"isometry of a trace-preserving map must satisfy V*V = I, deviation {dev:.3e}")
        object.__setattr__(self, "matrix", v)


def apply_map(m: QuantumMap, rho, dims: Sequence[int] | None = None, which: int | None = None) -> np.ndarray:
    """Apply the map, optionally to one tensor factor of a composite state.

    With ``dims``/``which`` the map acts on factor ``which`` of a state whose
    factor dimensions are ``dims``; identities act on the other factors.
    """
    rho = as_matrix(rho)
    if dims is None:
        if rho.shape[0] != m.in_dim:
            raise ValidationError(f"state dim {rho.shape[0]} does not match map input dim {m.in_dim}")
        return sum(k @ rho @ k.conj().T for k in m.kraus)
    dims = [int(d) for d in dims]
    if which is None or which < 0 or which >= len(dims):
        raise ValidationError("which must index a subsystem in dims")
    if dims[which] != m.in_dim:
        raise ValidationError(f"subsystem dim {dims[which]} does not match map input dim {m.in_dim}")
    if int(np.prod(dims)) != rho.shape[0]:
        raise ValidationError("product of dims does not match state dimension")
    before = int(np.prod(dims[:which])) if which else 1
    after = int(np.prod(dims[which + 1:])) if which + 1 < len(dims) else 1
    out = np.zeros((before * m.out_dim * after,) * 2, dtype=complex)
    ib, ia = np.eye(before), np.eye(after)
    for k in m.kraus:
        full = la.tensor(ib, k, ia)
        out += full @ rho @ full.conj().T
    return out


def adjoint_apply(m: QuantumMap, x) -> np.ndarray:
    """Adjoint (Heisenberg) action sum_i A_i* X A_i."""
    x = as_matrix(x)
    if x.shape[0] != m.out_dim:
        raise ValidationError(f"operator dim {x.shape[0]} does not match map output dim {m.out_dim}")
    return sum(k.conj().T @ x @ k for k in m.kraus)


def choi(m: QuantumMap) -> np.ndarray:
    """Choi matrix on input (x) output, C = sum_ij |i><j| (x) m(|i><j|)."""
    vecs = [np.reshape(k.T, -1) for k in m.kraus]  # w = sum_i e_i (x) A_i e_i
    c = np.zeros((m.in_dim * m.out_dim,) * 2, dtype=complex)
    for w in vecs:
        c += np.outer(w, w.conj())
    return c


def kraus_from_choi(c: np.ndarray, in_dim: int, out_dim: int, trace_preserving: bool | None = None) -> QuantumMap:
    """Recover a Kraus-form map from its Choi matrix (input (x) output convention).

    Eigenvalues below ``TOL_RANK * lambda_max`` are dropped; a Choi matrix
    that is not PSD within tolerance is rejected as a CP violation.
    """
    c = la.check_hermitian(np.asarray(c, dtype=complex), "Choi matrix")
    if c.shape[0] != in_dim * out_dim:
        raise ValidationError("Choi matrix dimension does not match in_dim * out_dim")
    w, v = np.linalg.eigh(la.hermitian_part(c))
    top = max(w.max(), 0.0)
    if w.min() < -TOL_PSD * max(1.0, top):
        raise ValidationError(f"Choi matrix is not PSD (min eigenvalue {w.min():.3e}): map is not CP")
    kraus = []
    for lam, vec in zip(w, v.T):
        if lam > TOL_RANK * max(top, 1e-300):
            kraus.append(np.sqrt(lam) * vec.reshape(in_dim, out_dim).T)
    if not kraus:
        kraus = [np.zeros((out_dim, in_dim))]
    return QuantumMap(tuple(kraus), trace_preserving=trace_preserving)


def minimal_kraus(m: QuantumMap) -> QuantumMap:
    """Drop redundant Kraus operators via the Choi spectrum."""
    return kraus_from_choi(choi(m), m.in_dim, m.out_dim, trace_preserving=m.trace_preserving or None)


def stinespring(m: QuantumMap, minimal: bool = False) -> StinespringIsometry:
    """Stinespring dilation with environment dimension = number of Kraus terms."""
    mm = minimal_kraus(m) if minimal else m
    env = len(mm.kraus)
    v = np.zeros((env * mm.out_dim, mm.in_dim), dtype=complex)
    for i, k in enumerate(mm.kraus):
        v[i * mm.out_dim:(i + 1) * mm.out_dim, :] = k
    return StinespringIsometry(v, env, mm.out_dim, mm.in_dim, trace_preserving=mm.trace_preserving)


def identity_channel(dim: int) -> QuantumMap:
    return QuantumMap((np.eye(dim),), trace_preserving=True)


def unitary_channel(u: np.ndarray) -> QuantumMap:
    u = np.asarray(u, dtype=complex)
    dev = np.abs(u.conj().T @ u - np.eye(u.shape[1])).max()
    if dev > 1e-9:
        raise ValidationError(f"matrix is not unitary, deviation {dev:.3e}")
    return QuantumMap((u,), trace_preserving=True)


def gad_channel(gamma: float, N: float) -> QuantumMap:
    """Generalized amplitude damping channel with its four standard Kraus operators."""
    if not (0.0 <= gamma <= 1.0 and 0.0 <= N <= 1.0):
        raise ValidationError(f"GAD parameters must lie in [0, 1], got gamma={gamma}, N={N}")
    sg = np.sqrt(1.0 - gamma)
    a1 = np.sqrt(1.0 - N) * np.array([[1.0, 0.0], [0.0, sg]])
    a2 = np.sqrt(gamma * (1.0 - N)) * np.array([[0.0, 1.0], [0.0, 0.0]])
    a3 = np.sqrt(N) * np.array([[sg, 0.0], [0.0, 1.0]])
    a4 = np.sqrt(gamma * N) * np.array([[0.0, 0.0], [1.0, 0.0]])
    return QuantumMap((a1, a2, a3, a4), trace_preserving=True)


def replacer_channel(sigma0, in_dim: int) -> QuantumMap:
    """Channel discarding its input and outputting the fixed state sigma0."""
    s = as_matrix(sigma0)
    la.check_hermitian(s, "sigma0")
    w, v = np.linalg.eigh(la.hermitian_part(s))
    if w.min() < -TOL_PSD:
        raise ValidationError("sigma0 must be PSD")
    kraus = []
    for lam, vec in zip(w, v.T):
        if lam > TOL_RANK * max(w.max(), 1e-300):
            for i in range(in_dim):
                k = np.zeros((s.shape[0], in_dim), dtype=complex)
                k[:, i] = np.sqrt(lam) * vec
                kraus.append(k)
    tp = abs(float(np.trace(s).real) - 1.0) <= TOL_TRACE
    return QuantumMap(tuple(kraus), trace_preserving=tp or None)


def tensor_map(m1: QuantumMap, m2: QuantumMap) -> QuantumMap:
    """Tensor product map with Kraus set {A_i (x) B_j}; zero factors dropped."""
    cap = dim_cap()
    if m1.in_dim * m2.in_dim > cap or m1.out_dim * m2.out_dim > cap:
        raise ResourceCapError("tensor_map output dimension exceeds cap")
    kraus = []
    for a in m1.kraus:
        if np.abs(a).max() == 0.0:
            continue
        for b in m2.kraus:
            if np.abs(b).max() == 0.0:
                continue
            kraus.append(np.kron(a, b))
    if not kraus:
        kraus = [np.zeros((m1.out_dim * m2.out_dim, m1.in_dim * m2.in_dim))]
    tp = m1.trace_preserving and m2.trace_preserving
    return QuantumMap(tuple(kraus), trace_preserving=tp or None)


def tensor_power_map(m: QuantumMap, n: int, minimal: bool = True) -> QuantumMap:
    if n < 1:
        raise ValidationError("tensor_power_map requires n >= 1")
    base = minimal_kraus(m) if minimal else m
    out = base
    for _ in range(n - 1):
        out = tensor_map(out, base)
    return out


# ---------------------------------------------------------------------------
# JSON wire format: complex entries are [re, im] pairs.
# ---------------------------------------------------------------------------

def _complex_matrix_to_json(m: np.ndarray):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def _complex_matrix_from_json(obj, name: str) -> np.ndarray:
    try:
        arr = np.array([[complex(e[0], e[1]) for e in row] for row in obj])
    except (TypeError, IndexError) as exc:
        raise ValidationError(f"field {name!r} must be a matrix of [re, im] pairs") from exc
    return arr


def matrix_to_json(m: np.ndarray) -> dict:
    return {"matrix": _complex_matrix_to_json(m)}


def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, dict):
        if "matrix" not in obj:
            raise ValidationError("state file must contain a 'matrix' field")
        obj = obj["matrix"]
    return _complex_matrix_from_json(obj, "matrix")


def map_to_json(m: QuantumMap) -> dict:
    return {
        "in_dim": m.in_dim,
        "out_dim": m.out_dim,
        "kraus": [_complex_matrix_to_json(k) for k in m.kraus],
        "trace_preserving": bool(m.trace_preserving),
    }


def map_from_json(obj: dict) -> QuantumMap:
    """Parse the channel-spec object: explicit Kraus form or a named constructor."""
    if not isinstance(obj, dict):
        raise ValidationError("channel spec must be a JSON object")
    if "gad" in obj:
        params = obj["gad"]
        if not isinstance(params, dict) or "gamma" not in params or "N" not in params:
            raise ValidationError("field 'gad' must carry 'gamma' and 'N'")
        return gad_channel(float(params["gamma"]), float(params["N"]))
    if "replacer" in obj:
        params = obj["replacer"]
        if not isinstance(params, dict) or "sigma0" not in params:
            raise ValidationError("field 'replacer' must carry 'sigma0'")
        sigma0 = _complex_matrix_from_json(params["sigma0"], "sigma0")
        in_dim = int(params.get("in_dim", sigma0.shape[0]))
        return replacer_channel(sigma0, in_dim)
    for key in ("in_dim", "out_dim", "kraus"):
        if key not in obj:
            raise ValidationError(f"channel spec missing field {key!r}")
    kraus = tuple(_complex_matrix_from_json(k, "kraus") for k in obj["kraus"])
    m = QuantumMap(kraus, trace_preserving=obj.get("trace_preserving") or None)
    if m.in_dim != int(obj["in_dim"]) or m.out_dim != int(obj["out_dim"]):
        raise ValidationError("field 'kraus' shapes disagree with declared in_dim/out_dim")
    return m


def load_channel(path: str) -> QuantumMap:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"channel file {path}: invalid JSON ({exc})") from exc
    return map_from_json(obj)


def load_state(path: str) -> np.ndarray:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"state file {path}: invalid JSON ({exc})") from exc
    return matrix_from_json(obj)
