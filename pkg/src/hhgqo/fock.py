"""Dense linear algebra on truncated multimode Fock spaces.

Mode 0 is always the driving field; modes 1.. are harmonics in ascending
order. All composite operators are built with ``np.kron`` in that order, so
a flat index ``i`` decomposes as ``np.unravel_index(i, dims)``.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
# Practical ceiling on the composite dimension; dense eigensolves beyond
# this are not desk-scale.
MAX_TOTAL_DIM = 50_000


class DimensionError(ValueError):
    """Invalid or inconsistent Fock-space dimensions."""


class ValidationError(ValueError):
    """A matrix fails a structural requirement (e.g. Hermiticity)."""


@dataclass(frozen=True)
class ModeDims:
    dims: tuple[int, ...]

    def __init__(self, dims: Iterable[int]):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise DimensionError("at least one mode is required")
        if any(d < 2 for d in dims):
            raise DimensionError(f"every mode dimension must be >= 2, got {dims}")
        total = math.prod(dims)
        if total > MAX_TOTAL_DIM:
            raise DimensionError(f"total dimension {total} exceeds {MAX_TOTAL_DIM}")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    def __len__(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __getitem__(self, i):
        return self.dims[i]


def _as_dims(dims) -> ModeDims:
    return dims if isinstance(dims, ModeDims) else ModeDims(dims)


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    """Relative Frobenius test ``||M - M^H|| <= tol * max(1, ||M||)``."""
    scale = max(1.0, float(np.linalg.norm(m)))
    return float(np.linalg.norm(m - m.conj().T)) <= tol * scale


@dataclass(frozen=True)
class DensityMatrix:
    """Dense (possibly unnormalized) density matrix with mode signature."""

    dims: ModeDims
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _as_dims(self.dims)
        data = np.array(self.data, dtype=complex)
        if data.shape != (dims.total, dims.total):
            raise DimensionError(
                f"matrix shape {data.shape} does not match dims {dims.dims}"
            )
        if not is_hermitian(data):
            raise ValidationError("density matrix is not Hermitian")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def normalized(self) -> DensityMatrix:
        return DensityMatrix(self.dims, self.data / self.trace())

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)


@dataclass(frozen=True)
class FockState:
    """Amplitude vector over a truncated multimode Fock space."""

    dims: ModeDims
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _as_dims(self.dims)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != dims.total:
            raise DimensionError(
                f"{amps.size} amplitudes do not match dims {dims.dims}"
            )
        if not np.all(np.isfinite(amps)):
            raise ValidationError("state amplitudes must be finite")
        amps.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", amps)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> FockState:
        return FockState(self.dims, self.amplitudes / math.sqrt(self.norm_squared()))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims.dims)

    def density(self) -> DensityMatrix:
        v = self.amplitudes
        return DensityMatrix(self.dims, np.outer(v, v.conj()))

    def expect(self, op: np.ndarray) -> complex:
        """Unnormalized ``<psi|op|psi>``."""
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))


def annihilation(dim: int) -> np.ndarray:
    if dim < 2:
        raise DimensionError(f"mode dimension must be >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).conj().T


def number(dim: int) -> np.ndarray:
    if dim < 2:
        raise DimensionError(f"mode dimension must be >= 2, got {dim}")
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def tensor_product(ops: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product in the given mode order."""
    if not ops:
        raise DimensionError("need at least one operator")
    for o in ops:
        o = np.asarray(o)
        if o.ndim != 2 or o.shape[0] != o.shape[1]:
            raise DimensionError(f"operator of shape {o.shape} is not square")
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def embed(op: np.ndarray, mode: int, dims) -> np.ndarray:
    """Lift a single-mode operator to the full space (identity elsewhere)."""
    dims = _as_dims(dims)
    if not 0 <= mode < len(dims):
        raise IndexError(f"mode {mode} out of range for {len(dims)} modes")
    if op.shape != (dims[mode], dims[mode]):
        raise DimensionError(f"operator shape {op.shape} does not fit mode {mode}")
    ops = [np.eye(d, dtype=complex) for d in dims]
    ops[mode] = op
    return tensor_product(ops)


def basis_vector(dim: int, k: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[k] = 1.0
    return v


def coherent_amplitudes(alpha: complex, dim: int) -> tuple[np.ndarray, float]:
    """Truncated, renormalized coherent state and the discarded tail mass."""
    k = np.arange(dim)
    log_mag = -0.5 * abs(alpha) ** 2 - 0.5 * np.array([math.lgamma(j + 1) for j in k])
    if alpha != 0:
        log_mag = log_mag + k * math.log(abs(alpha))
        phase = np.exp(1j * k * np.angle(alpha))
    else:
        log_mag = np.where(k == 0, 0.0, -np.inf)
        phase = np.ones(dim)
    v = np.exp(log_mag) * phase
    kept = float(np.vdot(v, v).real)
    return v / math.sqrt(kept), max(0.0, 1.0 - kept)


def _check_modes(dims: ModeDims, modes: Iterable[int]) -> list[int]:
    modes = sorted(set(int(m) for m in modes))
    if not modes:
        raise ValueError("keep must contain at least one mode")
    for m in modes:
        if not 0 <= m < len(dims):
            raise ValueError(f"mode {m} out of range for {len(dims)} modes")
    return modes


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every mode not in ``keep``; kept modes retain their order."""
    dims = rho.dims
    keep = _check_modes(dims, keep)
    n = len(dims)
    letters = string.ascii_letters
    if 2 * n > len(letters):
        raise DimensionError("too many modes for einsum subscripts")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for m in range(n):
        if m not in keep:
            col[m] = row[m]
    out = [row[m] for m in keep] + [col[m] for m in keep]
    spec = "".join(row) + "".join(col) + "->" + "".join(out)
    t = np.einsum(spec, rho.data.reshape(dims.dims * 2))
    kept_dims = ModeDims(dims[m] for m in keep)
    return DensityMatrix(kept_dims, t.reshape(kept_dims.total, kept_dims.total))


def partial_transpose(rho: DensityMatrix, mode: int) -> np.ndarray:
    dims = rho.dims
    n = len(dims)
    if not 0 <= mode < n:
        raise ValueError(f"mode {mode} out of range for {n} modes")
    axes = list(range(2 * n))
    axes[mode], axes[n + mode] = axes[n + mode], axes[mode]
    t = rho.data.reshape(dims.dims * 2).transpose(axes)
    return t.reshape(dims.total, dims.total)


def trace_norm(m: np.ndarray, tol: float = 1e-10) -> float:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"matrix of shape {m.shape} is not square")
    if not is_hermitian(m, tol):
        raise ValidationError("trace_norm requires a Hermitian matrix")
    return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())


_RESCALE_AT = 1e200


def assoc_laguerre_table(order: int, kmax: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Associated Laguerre values ``L_k^{(order)}(x)`` for ``k = 0..kmax``.

    Upward three-term recurrence. Returns ``(values, log_scale)`` with the
    true value ``values[k] * exp(log_scale[k])``; the scale only departs
    from zero once magnitudes approach overflow.
    """
    x = np.asarray(x, dtype=float)
    vals = np.empty((kmax + 1,) + x.shape)
    logs = np.zeros((kmax + 1,) + x.shape)
    vals[0] = 1.0
    if kmax == 0:
        return vals, logs
    vals[1] = 1.0 + order - x
    prev, cur = vals[0].copy(), vals[1].copy()
    acc = np.zeros(x.shape)
    for k in range(1, kmax):
        nxt = ((2 * k + 1 + order - x) * cur - (k + order) * prev) / (k + 1)
        big = np.abs(nxt) > _RESCALE_AT
        if np.any(big):
            s = np.where(big, np.abs(nxt), 1.0)
            nxt, cur = nxt / s, cur / s
            acc = acc + np.log(s)
        prev, cur = cur, nxt
        vals[k + 1] = cur
        logs[k + 1] = acc
    return vals, logs


def displacement_elements(alpha: np.ndarray, dim: int) -> np.ndarray:
    """``<n|D(alpha)|m>`` for ``n, m < dim`` on an array of complex ``alpha``.

    Output shape ``(dim, dim) + alpha.shape`` indexed ``[n, m]``.
    """
    alpha = np.asarray(alpha, dtype=complex)
    r2 = np.abs(alpha) ** 2
    out = np.zeros((dim, dim) + alpha.shape, dtype=complex)
    with np.errstate(divide="ignore"):
        log_r = np.log(np.abs(alpha))
    ang = np.angle(alpha)
    lg = [math.lgamma(j + 1) for j in range(dim)]
    for d in range(dim):
        lag, lsc = assoc_laguerre_table(d, dim - 1 - d, r2)
        for n in range(dim - d):
            m = n + d
            if d == 0:
                log_pref = 0.5 * (lg[n] - lg[m]) - 0.5 * r2
                mag = np.exp(log_pref + lsc[n])
            else:
                log_pref = 0.5 * (lg[n] - lg[m]) - 0.5 * r2 + d * log_r
                mag = np.exp(log_pref + lsc[n])
            # m >= n: (-alpha*)^d ; m < n: alpha^d with roles swapped
            upper = mag * lag[n] * np.exp(1j * d * (np.pi - ang))
            out[n, m] = upper
            if d:
                out[m, n] = mag * lag[n] * np.exp(1j * d * ang)
    return out


def wigner(rho: DensityMatrix, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Wigner function on the rectangular lattice ``q x p``.

    Convention ``alpha = (q + i p)/sqrt(2)``, normalized so that the vacuum
    gives ``exp(-q^2 - p^2)/pi``. Returned array has shape ``(len(q), len(p))``.
    """
    if len(rho.dims) != 1:
        raise DimensionError("wigner needs a single-mode density matrix")
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    qq, pp = np.meshgrid(q, p, indexing="ij")
    alpha = (qq + 1j * pp) / math.sqrt(2.0)
    dim = rho.dims[0]
    disp = displacement_elements(2.0 * alpha, dim)
    sign = (-1.0) ** np.arange(dim)
    # W = (1/pi) sum_{m,n} rho[m,n] (-1)^m <n|D(2 alpha)|m>
    w = np.einsum("mn,m,nm...->...", rho.data, sign, disp) / math.pi
    return w.real
