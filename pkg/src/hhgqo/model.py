"""Closed-form second-order perturbative solution of the HHG field model.

The Hamiltonian (hbar = 1) is

    H = w A^+A + w sum_n n a_n^+ a_n + sum_n chi_n (A^n a_n^+ + A^+^n a_n)

with the driving mode initially coherent (amplitude ``alpha0``) and every
harmonic in vacuum. In the frame that removes the classical (coherent
product) solution, the second-order state is

    |0> - sum_k Theta_k t^2 e^{-ikwt} |k>
        - i sum_{k,j} Omega_{j,k} t^3 e^{-i(k+j)wt} |k>|1_j>

and everything observable is a polynomial in ``Theta`` and ``Omega``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .fock import FockState, ModeDims, DimensionError

CLOSED_FORM = "closed_form"
DYSON = "dyson"
CONVENTIONS = (CLOSED_FORM, DYSON)


class TruncationError(DimensionError):
    """Target Fock space cannot hold the second-order state."""


_EXACT_FACTORIAL_MAX = 20


def sqrt_factorial_ratio(a: int, b: int) -> float:
    """``sqrt(a!/b!)``; exact integers below 20!, lgamma above."""
    if a <= _EXACT_FACTORIAL_MAX and b <= _EXACT_FACTORIAL_MAX:
        return math.sqrt(math.factorial(a) / math.factorial(b))
    return math.exp(0.5 * (math.lgamma(a + 1) - math.lgamma(b + 1)))


def binom(n: int, k: int) -> float:
    if k < 0 or k > n:
        return 0.0
    return float(math.comb(n, k))


@dataclass(frozen=True)
class ModelParams:
    alpha0: complex
    cutoff: int
    chi: Mapping[int, float]
    omega: float = 1.0

    def __post_init__(self):
        alpha0 = complex(self.alpha0)
        cutoff = int(self.cutoff)
        if cutoff < 2:
            raise ValueError(f"cutoff must be >= 2, got {cutoff}")
        if not abs(alpha0) > 0:
            raise ValueError("|alpha0| must be positive")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        chi = {}
        for n, c in sorted(self.chi.items()):
            n = int(n)
            if not 2 <= n <= cutoff:
                raise ValueError(f"harmonic order {n} outside 2..{cutoff}")
            c = float(c)
            if not (c >= 0 and math.isfinite(c)):
                raise ValueError(f"chi_{n} must be finite and >= 0, got {c}")
            chi[n] = c
        object.__setattr__(self, "alpha0", alpha0)
        object.__setattr__(self, "cutoff", cutoff)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def harmonics(self) -> tuple[int, ...]:
        """Harmonic modes carried by the model, ascending (zeros included)."""
        return tuple(self.chi)

    @property
    def alpha0_abs(self) -> float:
        return abs(self.alpha0)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    def chi_of(self, n: int) -> float:
        return self.chi.get(n, 0.0)

    def with_chi(self, chi: Mapping[int, float]) -> ModelParams:
        return ModelParams(self.alpha0, self.cutoff, chi, self.omega)

    def with_alpha0(self, alpha0: complex) -> ModelParams:
        return ModelParams(alpha0, self.cutoff, self.chi, self.omega)


def compute_theta(params: ModelParams) -> np.ndarray:
    """``|Theta_k|`` for ``k = 1..N`` (returned array index ``k - 1``)."""
    N = params.cutoff
    a = params.alpha0_abs
    out = np.zeros(N)
    for k in range(1, N + 1):
        sk = sqrt_factorial_ratio(k, 0)
        s = 0.0
        for n in range(max(2, k), N + 1):
            c = params.chi_of(n)
            if c:
                s += binom(n, k) * 0.5 * sk * c * c * a ** (2 * n - k)
        out[k - 1] = s
    return out


def compute_omega(params: ModelParams, theta: np.ndarray) -> np.ndarray:
    """``|Omega_{n,k}|``; rows follow ``params.harmonics``, columns ``k = 0..N``."""
    N = params.cutoff
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (N,):
        raise ValueError(f"theta must have length N={N}, got {theta.shape}")
    a = params.alpha0_abs
    th = np.concatenate([[0.0], theta])  # th[k] = |Theta_k|
    out = np.zeros((len(params.harmonics), N + 1))
    for row, n in enumerate(params.harmonics):
        c = params.chi_of(n)
        if not c:
            continue
        for kp in range(N + 1):
            s = 0.0
            for k in range(1, N + 1):
                if k + kp > N or k > n:
                    continue
                s += binom(n, k) * sqrt_factorial_ratio(k + kp, kp) * a ** (n - k) * th[k + kp]
            out[row, kp] = c / 3.0 * s
    return out


def compute_theta_complex(params: ModelParams) -> np.ndarray:
    """Complex ``Theta_k`` (index ``k``, entry 0 unused) for general ``alpha0``."""
    N = params.cutoff
    a0 = params.alpha0
    out = np.zeros(N + 1, dtype=complex)
    for k in range(1, N + 1):
        s = 0.0
        for n in range(max(2, k), N + 1):
            c = params.chi_of(n)
            if c:
                s += binom(n, k) * 0.5 * c * c * abs(a0) ** (2 * n)
        out[k] = s * sqrt_factorial_ratio(k, 0) / a0.conjugate() ** k
    return out


def compute_omega_complex(params: ModelParams, theta: np.ndarray) -> np.ndarray:
    """Complex ``Omega_{n,k}`` from complex ``theta`` (as returned above)."""
    N = params.cutoff
    a0 = params.alpha0
    out = np.zeros((len(params.harmonics), N + 1), dtype=complex)
    for row, n in enumerate(params.harmonics):
        c = params.chi_of(n)
        if not c:
            continue
        for kp in range(N + 1):
            s = 0j
            for k in range(1, min(n, N - kp) + 1):
                s += binom(n, k) * a0 ** (n - k) * sqrt_factorial_ratio(k + kp, kp) * theta[k + kp]
            out[row, kp] = c * s / 3.0
    return out


@dataclass(frozen=True)
class PerturbativeAmplitudes:
    """Evaluated ``Theta`` and ``Omega`` for one parameter set.

    ``theta[k]`` (``k = 0..N``, ``theta[0] = 0``) and ``omega[row, k]`` are
    complex and defined so that the transformed-frame state carries
    ``-Theta_k t^2`` and ``-i Omega_{j,k} t^3``.

    ``convention`` selects the sign of the second-order amplitude:
    ``"closed_form"`` keeps the sign of the magnitude closed form, ``"dyson"`` flips it to
    the sign obtained by integrating the second-order Dyson term directly.
    """

    params: ModelParams
    theta: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    convention: str = CLOSED_FORM

    @property
    def cutoff(self) -> int:
        return self.params.cutoff

    @property
    def harmonics(self) -> tuple[int, ...]:
        return self.params.harmonics

    @property
    def theta_abs(self) -> np.ndarray:
        return np.abs(self.theta[1:])

    @property
    def omega_abs(self) -> np.ndarray:
        return np.abs(self.omega)

    @property
    def phase_convention(self) -> str:
        """``"special"`` when ``alpha0 = -i|alpha0|``, else ``"general"``."""
        a0 = self.params.alpha0
        return "special" if abs(a0 + 1j * abs(a0)) <= 1e-14 * abs(a0) else "general"

    def row(self, n: int) -> int:
        try:
            return self.params.harmonics.index(n)
        except ValueError:
            raise KeyError(f"harmonic {n} is not part of the model") from None

    def omega_row(self, n: int) -> np.ndarray:
        return self.omega[self.row(n)]


def perturbative_amplitudes(params: ModelParams, convention: str = CLOSED_FORM) -> PerturbativeAmplitudes:
    """Evaluate the amplitudes from the magnitude forms plus the phase rule.

    With ``alpha0 = |alpha0| e^{i phi}``: ``Theta_k = |Theta_k| e^{ik phi}``,
    ``Omega_{n,k} = |Omega_{n,k}| e^{i(n+k) phi}`` (``phi = -pi/2`` gives the
    ``(-i)^k`` and ``(-i)^{n+k}`` factors).
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    N = params.cutoff
    phi = cmath.phase(params.alpha0)
    k = np.arange(N + 1)
    theta = np.concatenate([[0.0], compute_theta(params)]) * np.exp(1j * k * phi)
    omega_abs = compute_omega(params, np.abs(theta[1:]))
    n = np.array(params.harmonics, dtype=float).reshape(-1, 1)
    omega = omega_abs * np.exp(1j * (n + k) * phi)
    if convention == DYSON:
        omega = -omega
    theta.setflags(write=False)
    omega.setflags(write=False)
    return PerturbativeAmplitudes(params, theta, omega, convention)


def norm_squared(amps: PerturbativeAmplitudes, t: float) -> float:
    return float(
        1.0
        + np.sum(np.abs(amps.theta) ** 2) * t**4
        + np.sum(np.abs(amps.omega) ** 2) * t**6
    )


def zeroth_order_state(params: ModelParams, t: float) -> tuple[complex, dict[int, complex]]:
    """Coherent amplitudes of the uncorrelated product solution."""
    w = params.omega
    a0 = params.alpha0
    alpha_t = a0 * cmath.exp(-1j * w * t)
    betas = {
        n: -1j * t * c * a0**n * cmath.exp(-1j * n * w * t) for n, c in params.chi.items()
    }
    return alpha_t, betas


def is_perturbative(
    amps: PerturbativeAmplitudes, t: float, theta_max: float = 0.3, omega_frac: float = 0.1
) -> bool:
    """Advisory validity heuristic; never used to refuse a computation."""
    if np.any(amps.theta_abs * t**2 > theta_max):
        return False
    return float(np.sum(amps.omega_abs**2) * t**6) <= omega_frac * norm_squared(amps, t)


@dataclass(frozen=True)
class StateSecondOrder:
    params: ModelParams
    amps: PerturbativeAmplitudes
    t: float

    @property
    def valid(self) -> bool:
        return is_perturbative(self.amps, self.t)

    @property
    def norm_squared(self) -> float:
        return norm_squared(self.amps, self.t)


def minimal_dims(params: ModelParams, driving_pad: int = 1) -> ModeDims:
    """Smallest space holding the state exactly (plus ``driving_pad`` levels)."""
    return ModeDims([params.cutoff + driving_pad] + [2] * len(params.harmonics))


def _displacement_matrix(beta: complex, dim: int, pad: int = 40) -> np.ndarray:
    from scipy.linalg import expm

    from .fock import annihilation

    big = dim + pad
    a = annihilation(big)
    return expm(beta * a.conj().T - np.conj(beta) * a)[:dim, :dim]


def assemble_state_secondorder(
    amps: PerturbativeAmplitudes,
    t: float,
    dims: ModeDims | None = None,
    frame: str = "transformed",
) -> FockState:
    """Unnormalized second-order state as an explicit amplitude tensor.

    ``frame="lab"`` applies the coherent displacements numerically; those
    are truncated to ``dims`` and therefore only approximate.
    """
    params = amps.params
    N = params.cutoff
    H = len(params.harmonics)
    dims = minimal_dims(params) if dims is None else dims
    if not isinstance(dims, ModeDims):
        dims = ModeDims(dims)
    if len(dims) != H + 1:
        raise DimensionError(f"expected {H + 1} modes, got {len(dims)}")
    if dims[0] < N + 1 or any(d < 2 for d in dims.dims[1:]):
        raise TruncationError(f"dims {dims.dims} cannot hold driving level {N}")
    w = params.omega
    psi = np.zeros(dims.dims, dtype=complex)
    vac = (0,) * H
    psi[(0,) + vac] = 1.0
    for k in range(1, N + 1):
        psi[(k,) + vac] = -amps.theta[k] * t**2 * cmath.exp(-1j * k * w * t)
    for row, j in enumerate(params.harmonics):
        occ = [0] * H
        occ[row] = 1
        for k in range(N + 1):
            psi[(k,) + tuple(occ)] += (
                -1j * amps.omega[row, k] * t**3 * cmath.exp(-1j * (k + j) * w * t)
            )
    if frame == "lab":
        alpha_t, betas = zeroth_order_state(params, t)
        mats = [_displacement_matrix(alpha_t, dims[0])]
        mats += [_displacement_matrix(betas[j], dims[i + 1]) for i, j in enumerate(params.harmonics)]
        for axis, m in enumerate(mats):
            psi = np.moveaxis(np.tensordot(m, psi, axes=([1], [axis])), 0, axis)
    elif frame != "transformed":
        raise ValueError(f"unknown frame {frame!r}")
    return FockState(dims, psi.reshape(-1))
