"""Dense complex matrix kernel.

Hermitian eigendecomposition, matrix functions and their directional
(Daleckii-Krein) derivatives, tensor products, partial traces, norms,
fidelity, and seeded random ensembles. Everything operates on plain
``numpy.ndarray`` objects; higher layers add physical interpretation.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .config import LN2, TOL_HERM_REL, TOL_PSD, TOL_RANK, dim_cap
from .errors import DomainError, ResourceCapError, ValidationError

__all__ = [
    "hermitian_part",
    "check_square",
    "check_hermitian",
    "check_finite",
    "herm_eig",
    "mat_func",
    "mat_log",
    "mat_exp",
    "mat_pow",
    "mat_sqrt",
    "frechet_matfunc",
    "tensor",
    "tensor_power",
    "partial_trace",
    "permute_systems",
    "trace_norm",
    "max_eig",
    "min_eig",
    "fidelity",
    "support_projector",
    "project_to_density",
    "random_density",
    "random_unitary",
    "random_hermitian",
    "von_neumann_entropy",
]


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def check_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    return a


def check_finite(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains NaN or Inf entries")
    return a


def check_hermitian(a: np.ndarray, name: str = "matrix", tol: float | None = None) -> np.ndarray:
    """Validate Hermiticity within ``TOL_HERM_REL * max|entry|`` and return the matrix."""
    a = check_finite(check_square(a, name), name)
    scale = max(np.abs(a).max(), 1e-300) if a.size else 1.0
    if tol is None:
        tol = TOL_HERM_REL * max(scale, 1.0)
    dev = np.abs(a - a.conj().T).max() if a.size else 0.0
    if dev > tol:
        raise ValidationError(f"{name} is not Hermitian: max deviation {dev:.3e} > tol {tol:.3e}")
    return a


def herm_eig(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns eigenvalues sorted descending and the matching unitary of
    eigenvectors (columns), so that ``h = V @ diag(w) @ V.conj().T``.
    """
    h = check_hermitian(h)
    w, v = np.linalg.eigh(hermitian_part(h))
    return w[::-1].copy(), v[:, ::-1].copy()


def _eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # internal ascending-order eigh without validation overhead
    return np.linalg.eigh(hermitian_part(h))


def mat_func(
    h: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    support_only: bool = False,
) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix via the spectral calculus.

    With ``support_only`` the function acts on eigenvalues above
    ``TOL_RANK * lambda_max`` and maps the rest to zero, which is how
    pseudo-logs and pseudo-powers on a support are realised. Without the
    flag, a non-finite ``f(eigenvalue)`` raises :class:`DomainError`.
    """
    w, v = _eigh(check_hermitian(h))
    if support_only:
        cutoff = TOL_RANK * max(np.abs(w).max(), 0.0)
        fw = np.zeros_like(w)
        mask = w > cutoff
        if np.any(mask):
            fw[mask] = f(w[mask])
    else:
        with np.errstate(all="ignore"):
            fw = np.asarray(f(w), dtype=float)
    if not np.all(np.isfinite(fw)):
        raise DomainError("scalar function evaluated outside its domain on the spectrum; pass support_only for functions singular at 0")
    return (v * fw) @ v.conj().T


def mat_log(h: np.ndarray, support_only: bool = False) -> np.ndarray:
    return mat_func(h, np.log, support_only=support_only)


def mat_exp(h: np.ndarray) -> np.ndarray:
    return mat_func(h, np.exp)


def mat_pow(h: np.ndarray, p: float, support_only: bool = False) -> np.ndarray:
    return mat_func(h, lambda x: np.power(x, p), support_only=support_only)


def mat_sqrt(h: np.ndarray) -> np.ndarray:
    # tiny negative eigenvalues from rounding are clipped to zero
    return mat_func(h, lambda x: np.sqrt(np.maximum(x, 0.0)))


def _divided_differences(w: np.ndarray, f, fprime) -> np.ndarray:
    """First divided difference table f[w_i, w_j] with f' on the diagonal."""
    n = w.size
    fw = np.asarray(f(w), dtype=complex)
    table = np.empty((n, n), dtype=complex)
    scale = max(np.abs(w).max(), 1.0)
    close = 1e-10 * scale
    for i in range(n):
        for j in range(n):
            d = w[i] - w[j]
            if abs(d) <= close:
                table[i, j] = fprime(0.5 * (w[i] + w[j]))
            else:
                table[i, j] = (fw[i] - fw[j]) / d
    return table


def frechet_matfunc(
    h: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    direction: np.ndarray,
    fprime: Callable[[float], float] | None = None,
) -> np.ndarray:
    """Directional derivative of ``h -> f(h)`` at ``h`` along ``direction``.

    Uses the Daleckii-Krein formula in the eigenbasis of ``h``: the matrix of
    first divided differences multiplies the rotated direction entrywise.
    ``f`` must be differentiable on the spectrum of ``h``. If ``fprime`` is
    omitted a central finite difference of ``f`` is used for the diagonal.
    """
    h = check_hermitian(h)
    direction = check_square(np.asarray(direction, dtype=complex), "direction")
    if direction.shape != h.shape:
        raise ValidationError("direction must match the shape of h")
    if fprime is None:
        def fprime(x, _f=f):  # noqa: E731 - tiny local closure
            step = 1e-7 * max(abs(x), 1.0)
            return (_f(np.array([x + step]))[0] - _f(np.array([x - step]))[0]) / (2 * step)
    w, v = _eigh(h)
    table = _divided_differences(w, f, fprime)
    rotated = v.conj().T @ direction @ v
    return v @ (table * rotated) @ v.conj().T


def frechet_multiplier(w: np.ndarray, v: np.ndarray, f, fprime) -> Callable[[np.ndarray], np.ndarray]:
    """Return the self-adjoint map D |-> V (table o (V* D V)) V* for reuse."""
    table = _divided_differences(w, f, fprime)

    def apply(direction: np.ndarray) -> np.ndarray:
        return v @ (table * (v.conj().T @ direction @ v)) @ v.conj().T

    return apply


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of the given operators, dimension-capped."""
    if not ops:
        raise ValidationError("tensor requires at least one operator")
    total_rows = 1
    total_cols = 1
    for op in ops:
        op = np.asarray(op)
        r = op.shape[0]
        c = op.shape[1] if op.ndim > 1 else 1
        total_rows *= r
        total_cols *= c
    cap = dim_cap()
    if max(total_rows, total_cols) > cap:
        raise ResourceCapError(f"tensor dimension {max(total_rows, total_cols)} exceeds cap {cap}")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def tensor_power(a: np.ndarray, n: int) -> np.ndarray:
    if n < 1:
        raise ValidationError("tensor_power requires n >= 1")
    return tensor(*([a] * n))


def partial_trace(a: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out the subsystems not listed in ``keep``.

    ``dims`` are the factor dimensions of ``a`` (their product must match
    the matrix size); kept factors stay in their original relative order.
    """
    a = check_square(np.asarray(a, dtype=complex))
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise ValidationError("dims must be positive")
    total = int(np.prod(dims))
    if total != a.shape[0]:
        raise ValidationError(f"product of dims {dims} = {total} does not match matrix dim {a.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValidationError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    tens = a.reshape(dims + dims)
    # row index of factor i is axis i, column index is axis n + i
    traced = [i for i in range(n) if i not in keep]
    for count, i in enumerate(traced):
        offset = sum(1 for j in traced[:count] if j < i)
        ax = i - offset
        tens = np.trace(tens, axis1=ax, axis2=ax + (n - count))
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return tens.reshape(d_keep, d_keep)


def permute_systems(a: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a square operator: new factor i = old factor perm[i]."""
    a = check_square(np.asarray(a, dtype=complex))
    dims = [int(d) for d in dims]
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise ValidationError(f"perm {perm} is not a permutation of 0..{n - 1}")
    tens = a.reshape(dims + dims)
    axes = list(perm) + [n + p for p in perm]
    tens = tens.transpose(axes)
    d = int(np.prod(dims))
    return tens.reshape(d, d)


def trace_norm(a: np.ndarray) -> float:
    """Sum of singular values."""
    a = np.asarray(a, dtype=complex)
    return float(np.linalg.svd(a, compute_uv=False).sum())


def max_eig(h: np.ndarray) -> float:
    w = np.linalg.eigvalsh(hermitian_part(check_square(np.asarray(h, dtype=complex))))
    return float(w[-1])


def min_eig(h: np.ndarray) -> float:
    w = np.linalg.eigvalsh(hermitian_part(check_square(np.asarray(h, dtype=complex))))
    return float(w[0])


def _check_psd(a: np.ndarray, name: str) -> np.ndarray:
    a = check_hermitian(a, name)
    low = min_eig(a)
    if low < -TOL_PSD * max(1.0, abs(max_eig(a))):
        raise ValidationError(f"{name} has negative eigenvalue {low:.3e}")
    return a


def fidelity(rho: np.ndarray, sigma: np.ndarray, generalized: bool = False) -> float:
    """Root fidelity ||sqrt(rho) sqrt(sigma)||_1 of two PSD operators.

    With ``generalized`` the subnormalized-state term
    ``sqrt((1 - tr rho)(1 - tr sigma))`` is added.
    """
    rho = _check_psd(np.asarray(rho, dtype=complex), "rho")
    sigma = _check_psd(np.asarray(sigma, dtype=complex), "sigma")
    rs = mat_sqrt(rho)
    val = trace_norm(rs @ mat_sqrt(sigma))
    if generalized:
        tr, ts = float(np.trace(rho).real), float(np.trace(sigma).real)
        val += np.sqrt(max(1.0 - tr, 0.0) * max(1.0 - ts, 0.0))
    return float(val)


def support_projector(h: np.ndarray, rel_cutoff: float = TOL_RANK) -> np.ndarray:
    """Projector onto the span of eigenvectors with eigenvalue > rel_cutoff * lambda_max."""
    w, v = _eigh(h)
    cutoff = rel_cutoff * max(np.abs(w).max(), 0.0)
    cols = v[:, w > cutoff]
    return cols @ cols.conj().T


def project_to_density(h: np.ndarray) -> np.ndarray:
    """Nearest-ish density operator: clip eigenvalues at 0 and renormalize."""
    w, v = _eigh(h)
    w = np.maximum(w, 0.0)
    s = w.sum()
    if s <= 0.0:
        w = np.ones_like(w)
        s = w.sum()
    return (v * (w / s)) @ v.conj().T


def random_density(dim: int, seed, real_entries: bool = False) -> np.ndarray:
    """Wishart-style random density: normalized G G* with Gaussian G."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim))
    if not real_entries:
        g = g + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(dim: int, seed) -> np.ndarray:
    """Haar-ish random unitary from orthonormalizing a Gaussian matrix."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    phases = np.diag(r).copy()
    phases = phases / np.abs(phases)
    return q * phases


def random_hermitian(dim: int, seed, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * hermitian_part(g)


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy in bits, with 0 log 0 = 0."""
    w = np.linalg.eigvalsh(hermitian_part(np.asarray(rho, dtype=complex)))
    w = w[w > TOL_RANK * max(w.max(), 0.0)] if w.size else w
    if w.size == 0:
        return 0.0
    return float(-(w * np.log(w)).sum() / LN2)
