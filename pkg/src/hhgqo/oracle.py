"""Numerically exact reference: the truncated Hamiltonian in a finite Fock space.

Used to check the perturbative closed forms. The driving mode is truncated
well above its coherent-state support and each harmonic keeps a few levels;
populations of the top level of every mode are reported so that
truncation artefacts are visible rather than silent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .fock import (
    MAX_TOTAL_DIM,
    DensityMatrix,
    DimensionError,
    FockState,
    ModeDims,
    annihilation,
    coherent_amplitudes,
    partial_transpose,
    trace_norm,
)
from .model import ModelParams

METHODS = ("expm", "ode", "expm_multiply")
DENSE_LIMIT = 6000


class CapacityError(DimensionError):
    """Requested Fock space exceeds what the oracle will build."""


@dataclass(frozen=True)
class OracleConfig:
    """Truncation and integration settings.

    ``max_step`` is in optical cycles and only applies to the ODE path.
    ``alarm`` bounds the population allowed in any mode's top level.
    """

    dims: ModeDims | None = None
    harmonic_dim: int = 3
    method: str = "expm"
    tolerance: float = 1e-12
    max_step: float = 0.05
    alarm: float = 1e-8

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.harmonic_dim < 2:
            raise ValueError("harmonic_dim must be >= 2")
        if not 0 < self.tolerance <= 1e-4:
            raise ValueError(f"tolerance must lie in (0, 1e-4], got {self.tolerance}")
        if not 0 < self.alarm <= 1e-3:
            raise ValueError(f"alarm must lie in (0, 1e-3], got {self.alarm}")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.dims is not None and not isinstance(self.dims, ModeDims):
            object.__setattr__(self, "dims", ModeDims(self.dims))


def default_dims(params: ModelParams, harmonic_dim: int = 3) -> ModeDims:
    """Driving dimension covering the coherent support plus the cutoff."""
    a = params.alpha0_abs
    d = max(16, math.ceil(a * a + 8 * a + 2 * params.cutoff + 4))
    return ModeDims([d] + [harmonic_dim] * len(params.harmonics))


def _sparse_embed(op: np.ndarray, mode: int, dims: ModeDims) -> sp.csr_matrix:
    out = sp.identity(1, format="csr", dtype=complex)
    for i, d in enumerate(dims):
        out = sp.kron(out, sp.csr_matrix(op) if i == mode else sp.identity(d, dtype=complex), format="csr")
    return out


def mode_operators(params: ModelParams, dims: ModeDims) -> dict[int, sp.csr_matrix]:
    """Lowering operators keyed by mode label (``1`` driving, ``n`` harmonic)."""
    ops = {1: _sparse_embed(annihilation(dims[0]), 0, dims)}
    for i, n in enumerate(params.harmonics):
        ops[n] = _sparse_embed(annihilation(dims[i + 1]), i + 1, dims)
    return ops


def build_hamiltonian(params: ModelParams, dims: ModeDims) -> sp.csr_matrix:
    if len(dims) != len(params.harmonics) + 1:
        raise DimensionError(f"expected {len(params.harmonics) + 1} modes, got {len(dims)}")
    if dims.total > MAX_TOTAL_DIM:
        raise CapacityError(f"total dimension {dims.total} exceeds {MAX_TOTAL_DIM}")
    w = params.omega
    ops = mode_operators(params, dims)
    A = ops[1]
    H = w * (A.getH() @ A)
    for n in params.harmonics:
        a = ops[n]
        H = H + w * n * (a.getH() @ a)
        c = params.chi_of(n)
        if c:
            An = A**n
            X = c * (An @ a.getH())
            H = H + X + X.getH()
    return H.tocsr()


def excitation_operator(params: ModelParams, dims: ModeDims) -> sp.csr_matrix:
    """``A^+A + sum_n n a_n^+ a_n``; commutes with the Hamiltonian."""
    ops = mode_operators(params, dims)
    J = ops[1].getH() @ ops[1]
    for n in params.harmonics:
        J = J + n * (ops[n].getH() @ ops[n])
    return J.tocsr()


def initial_state(params: ModelParams, dims: ModeDims) -> tuple[np.ndarray, float]:
    """Coherent driving mode times harmonic vacua; returns ``(psi, tail_mass)``."""
    vec, tail = coherent_amplitudes(params.alpha0, dims[0])
    psi = vec
    for d in dims.dims[1:]:
        e = np.zeros(d)
        e[0] = 1.0
        psi = np.kron(psi, e)
    return psi.astype(complex), tail


@dataclass
class OracleResult:
    state: FockState
    t: float
    top_population: tuple[float, ...]
    alarm: bool
    tail_mass: float = 0.0

    @property
    def dims(self) -> ModeDims:
        return self.state.dims


def top_populations(psi: np.ndarray, dims: ModeDims) -> tuple[float, ...]:
    p = np.abs(psi.reshape(dims.dims)) ** 2
    return tuple(float(np.take(p, -1, axis=axis).sum()) for axis in range(len(dims)))


def _propagate(H, psi0: np.ndarray, t: float, cfg: OracleConfig, omega: float) -> np.ndarray:
    if t == 0:
        return psi0.copy()
    if cfg.method == "expm":
        if H.shape[0] > DENSE_LIMIT:
            raise CapacityError(f"dense exponential limited to {DENSE_LIMIT} states")
        Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
        return scipy.linalg.expm(-1j * t * Hd) @ psi0
    if cfg.method == "expm_multiply":
        return expm_multiply(-1j * t * sp.csr_matrix(H), psi0)
    Hs = sp.csr_matrix(H)
    sol = solve_ivp(
        lambda _, y: -1j * (Hs @ y),
        (0.0, t),
        psi0,
        method="DOP853",
        rtol=cfg.tolerance,
        atol=cfg.tolerance * 1e-2,
        max_step=cfg.max_step * 2 * math.pi / omega,
    )
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return sol.y[:, -1]


def evolve(H, psi0: FockState, t: float, cfg: OracleConfig | None = None, omega: float = 1.0) -> OracleResult:
    """``exp(-iHt)|psi0>`` by dense exponential or adaptive DOP853 integration.

    ``omega`` only sets the unit of ``cfg.max_step``.
    """
    cfg = cfg or OracleConfig()
    if t < 0:
        raise ValueError("t must be >= 0")
    nrm = psi0.norm_squared()
    if abs(nrm - 1) > 1e-10:
        raise ValueError(f"initial state must be normalized, |psi|^2 = {nrm}")
    psi = _propagate(H, psi0.amplitudes.astype(complex), float(t), cfg, omega)
    tops = top_populations(psi, psi0.dims)
    return OracleResult(FockState(psi0.dims, psi), float(t), tops, max(tops) > cfg.alarm)


class Oracle:
    """One parameter set: Hamiltonian and initial state built once."""

    def __init__(self, params: ModelParams, config: OracleConfig | None = None):
        self.params = params
        self.config = config or OracleConfig()
        dims = self.config.dims
        self.dims = dims if dims is not None else default_dims(params, self.config.harmonic_dim)
        self.H = build_hamiltonian(params, self.dims)
        psi0, self.tail_mass = initial_state(params, self.dims)
        self.psi0 = FockState(self.dims, psi0)

    def evolve(self, t: float) -> OracleResult:
        res = evolve(self.H, self.psi0, t, self.config, self.params.omega)
        res.tail_mass = self.tail_mass
        res.alarm = res.alarm or self.tail_mass > self.config.alarm
        return res


def expectation(psi: np.ndarray, op) -> complex:
    return complex(np.vdot(psi, op @ psi))


def harmonic_pair_density(state: FockState, params: ModelParams, n: int, m: int) -> DensityMatrix:
    """Reduced state of harmonics ``(n, m)``, first factor ``n``."""
    dims = state.dims
    ia, ib = params.harmonics.index(n) + 1, params.harmonics.index(m) + 1
    psi = state.amplitudes.reshape(dims.dims)
    psi = np.moveaxis(psi, (ia, ib), (0, 1))
    da, db = dims[ia], dims[ib]
    psi = psi.reshape(da * db, -1)
    rho = psi @ psi.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(ModeDims([da, db]), rho)


@dataclass
class OracleObservables:
    t: float
    N: dict[int, float]
    G: dict[tuple[int, int], float]
    gamma: dict[tuple[int, int], float]
    R: dict[tuple[int, int], float]
    E: dict[tuple[int, int], float]
    energy: float
    excitations: float


def oracle_observables(state: FockState, params: ModelParams, t: float = math.nan, negativity: bool = True) -> OracleObservables:
    """Direct expectation values on a propagated lab-frame state."""
    dims = state.dims
    ops = mode_operators(params, dims)
    psi = state.amplitudes
    nrm = float(np.vdot(psi, psi).real)
    applied = {i: op @ psi for i, op in ops.items()}
    modes = tuple(ops)
    N = {i: float(np.vdot(v, v).real) / nrm for i, v in applied.items()}
    G = {}
    for i in modes:
        for j in modes:
            if i <= j:
                v = ops[i] @ applied[j]
                G[(i, j)] = float(np.vdot(v, v).real) / nrm
    gam = {}
    for (i, j), g in G.items():
        d = N[i] * N[j]
        gam[(i, j)] = g / d if d > 0 else math.nan
    R, E = {}, {}
    for n, m in combinations(params.harmonics, 2):
        d = G[(n, n)] * G[(m, m)]
        R[(n, m)] = G[(n, m)] ** 2 / d if d > 0 else math.nan
        if negativity:
            rho = harmonic_pair_density(state, params, n, m).normalized()
            e = math.log2(trace_norm(partial_transpose(rho, 0)))
            E[(n, m)] = 0.0 if e < 1e-14 else e
    H = build_hamiltonian(params, dims)
    J = excitation_operator(params, dims)
    return OracleObservables(
        t,
        N,
        G,
        gam,
        R,
        E,
        expectation(psi, H).real / nrm,
        expectation(psi, J).real / nrm,
    )


def observables_at(params: ModelParams, times: Sequence[float], config: OracleConfig | None = None):
    """Oracle observables plus truncation alarm for each time."""
    orc = Oracle(params, config)
    out = []
    for t in times:
        res = orc.evolve(t)
        out.append((oracle_observables(res.state, params, t), res))
    return out
