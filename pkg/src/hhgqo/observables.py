"""Photon numbers, coherence functions, reduced states and negativity.

All closed forms take the (complex) perturbative amplitudes and are valid
for any driving phase. ``*_special`` variants are the simplified
magnitude-only expressions for ``alpha0 = -i|alpha0|``; they are kept as
fast paths and as an independent cross-check of the general forms.

The general forms are exact expectation values of the displaced
second-order state, i.e. of ``(A + alpha(t))`` and ``(a_n + beta_n(t))``
applied to the transformed-frame state and divided by its squared norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .fock import DensityMatrix, ModeDims, partial_transpose, trace_norm
from .model import CLOSED_FORM, PerturbativeAmplitudes, is_perturbative, norm_squared

DRIVING = 1


def _pad(x: np.ndarray, extra: int = 2) -> np.ndarray:
    return np.concatenate([x, np.zeros(x.shape[:-1] + (extra,), dtype=x.dtype)], axis=-1)


def _lower(d: np.ndarray, alpha: complex) -> np.ndarray:
    """``(A + alpha) d`` for an amplitude vector ``d`` over driving levels."""
    k = np.arange(1, len(d))
    out = alpha * d.astype(complex)
    out[:-1] += np.sqrt(k) * d[1:]
    return out


def _sq(v: np.ndarray) -> float:
    return float(np.vdot(v, v).real)


class _Sectors:
    """Phase-free amplitude vectors of the second-order state.

    The state splits into the harmonic-vacuum sector ``v`` and single
    excitations ``w[j]`` of harmonic ``j``; each is a vector over driving
    levels. All time-dependent phases cancel in one-time expectations, so
    ``alpha0`` and ``beta_n = -i t chi_n alpha0^n`` stand in for the
    displacements.
    """

    def __init__(self, amps: PerturbativeAmplitudes, t: float):
        p = amps.params
        self.amps = amps
        self.t = t
        self.a0 = p.alpha0
        # one spare level so that (A + alpha)^2 never truncates
        self.v = _pad(-amps.theta * t**2, 2)
        self.v[0] = 1.0
        self.w = {j: _pad(-1j * amps.omega[r] * t**3, 2) for r, j in enumerate(p.harmonics)}
        self.beta = {j: -1j * t * p.chi_of(j) * p.alpha0**j for j in p.harmonics}
        self.norm = _sq(self.v) + sum(_sq(x) for x in self.w.values())
        self.w_norm = sum(_sq(x) for x in self.w.values())

    def f1(self, d: np.ndarray) -> float:
        return _sq(_lower(d, self.a0))

    def f2(self, d: np.ndarray) -> float:
        return _sq(_lower(_lower(d, self.a0), self.a0))


def mean_photon_driving(amps: PerturbativeAmplitudes, t: float) -> float:
    S = _Sectors(amps, t)
    s = S.f1(S.v) + sum(S.f1(x) for x in S.w.values())
    return s / S.norm


def mean_photon_harmonic(amps: PerturbativeAmplitudes, n: int, t: float) -> float:
    S = _Sectors(amps, t)
    b = S.beta[n]
    return (_sq(S.w[n] + b * S.v) + abs(b) ** 2 * S.w_norm) / S.norm


def _g11(S: _Sectors) -> float:
    return (S.f2(S.v) + sum(S.f2(x) for x in S.w.values())) / S.norm


def _gnn(S: _Sectors, n: int) -> float:
    b = S.beta[n]
    return (_sq(2 * b * S.w[n] + b * b * S.v) + abs(b) ** 4 * S.w_norm) / S.norm


def _g1n(S: _Sectors, n: int) -> float:
    b = S.beta[n]
    x = S.w[n] + b * S.v
    return (S.f1(x) + abs(b) ** 2 * sum(S.f1(y) for y in S.w.values())) / S.norm


def _gnm(S: _Sectors, n: int, m: int) -> float:
    bn, bm = S.beta[n], S.beta[m]
    x = bm * S.w[n] + bn * S.w[m] + bn * bm * S.v
    return (_sq(x) + abs(bn * bm) ** 2 * S.w_norm) / S.norm


def _check_mode(amps: PerturbativeAmplitudes, i: int) -> None:
    if i != DRIVING and i not in amps.harmonics:
        raise KeyError(f"mode {i} is neither the driving mode (1) nor a harmonic")


def coherence(amps: PerturbativeAmplitudes, pair: tuple[int, int], t: float) -> float:
    """Normally ordered one-time second-order coherence ``G_ij``.

    Mode ``1`` is the driving field, any other index a harmonic order.
    """
    i, j = sorted(pair)
    _check_mode(amps, i)
    _check_mode(amps, j)
    T = _Sectors(amps, t)
    if i == j == DRIVING:
        return _g11(T)
    if i == DRIVING:
        return _g1n(T, j)
    if i == j:
        return _gnn(T, i)
    return _gnm(T, i, j)


def mean_photon(amps: PerturbativeAmplitudes, mode: int, t: float) -> float:
    _check_mode(amps, mode)
    if mode == DRIVING:
        return mean_photon_driving(amps, t)
    return mean_photon_harmonic(amps, mode, t)


def gamma_from(G: float, Ni: float, Nj: float) -> float:
    """``G / (Ni Nj)``; NaN when a mean photon number vanishes."""
    denom = Ni * Nj
    if denom == 0 or not math.isfinite(denom):
        return math.nan
    return G / denom


def gamma(amps: PerturbativeAmplitudes, pair: tuple[int, int], t: float) -> float:
    i, j = sorted(pair)
    return gamma_from(coherence(amps, (i, j), t), mean_photon(amps, i, t), mean_photon(amps, j, t))


def cbs_ratio_from(Gnm: float, Gnn: float, Gmm: float) -> float:
    denom = Gnn * Gmm
    if denom == 0:
        return math.nan
    return Gnm**2 / denom


def cbs_ratio(amps: PerturbativeAmplitudes, n: int, m: int, t: float) -> float:
    """``G_nm^2 / (G_nn G_mm)``; values above one violate Cauchy-Schwarz."""
    if n == m:
        raise ValueError("cbs_ratio needs two distinct harmonics")
    return cbs_ratio_from(
        coherence(amps, (n, m), t), coherence(amps, (n, n), t), coherence(amps, (m, m), t)
    )


def _reduced_terms(amps: PerturbativeAmplitudes, n: int, t: float) -> complex:
    """Off-diagonal ``<0|rho|1>`` of harmonic ``n`` (unnormalized)."""
    w = amps.omega_row(n)
    ph = np.exp(1j * n * amps.params.omega * t)
    return 1j * t**3 * w[0].conjugate() * ph - 1j * t**5 * np.sum(amps.theta[1:] * w[1:].conjugate()) * ph


def single_mode_density(amps: PerturbativeAmplitudes, n: int, t: float) -> DensityMatrix:
    """Transformed-frame reduced state of harmonic ``n`` (basis ``|0>, |1>``)."""
    w = amps.omega_row(n)
    p1 = float(np.sum(np.abs(w) ** 2)) * t**6
    p0 = norm_squared(amps, t) - p1
    c = _reduced_terms(amps, n, t)
    return DensityMatrix(ModeDims([2]), np.array([[p0, c], [np.conj(c), p1]]))


def two_mode_density(amps: PerturbativeAmplitudes, n: int, m: int, t: float) -> DensityMatrix:
    """Transformed-frame reduced state of harmonics ``(n, m)``.

    Basis ``|00>, |01>, |10>, |11>`` with the first digit for ``n``.
    """
    if n == m:
        raise ValueError("two_mode_density needs two distinct harmonics")
    wn, wm = amps.omega_row(n), amps.omega_row(m)
    w = amps.params.omega
    d = float(np.sum(np.abs(wm) ** 2)) * t**6
    f = float(np.sum(np.abs(wn) ** 2)) * t**6
    a = norm_squared(amps, t) - d - f
    b = _reduced_terms(amps, m, t)
    c = _reduced_terms(amps, n, t)
    e = np.sum(wm * wn.conjugate()) * t**6 * np.exp(1j * (n - m) * w * t)
    rho = np.array(
        [
            [a, b, c, 0],
            [np.conj(b), d, e, 0],
            [np.conj(c), np.conj(e), f, 0],
            [0, 0, 0, 0],
        ],
        dtype=complex,
    )
    return DensityMatrix(ModeDims([2, 2]), rho)


def log_negativity_of(rho: DensityMatrix, mode: int = 0) -> float:
    pt = partial_transpose(rho.normalized(), mode)
    e = math.log2(trace_norm(pt))
    return 0.0 if e < 1e-14 else e


def log_negativity(amps: PerturbativeAmplitudes, n: int, m: int, t: float) -> float:
    return log_negativity_of(two_mode_density(amps, n, m, t), 0)


# Magnitude-only forms for alpha0 = -i|alpha0| and the closed-form sign.


def _special(amps: PerturbativeAmplitudes):
    if amps.phase_convention != "special" or amps.convention != CLOSED_FORM:
        raise ValueError("special forms need alpha0 = -i|alpha0| and the closed_form convention")
    th = _pad(np.concatenate([[0.0], amps.theta_abs]), 2)
    return abs(amps.params.alpha0), th, amps.omega_abs


def mean_photon_driving_special(amps: PerturbativeAmplitudes, t: float) -> float:
    a, th, om = _special(amps)
    N = amps.cutoff
    k = np.arange(N + 1)
    nrm = norm_squared(amps, t)
    omp = _pad(om, 1)
    s = -2 * th[1] * a * t**2
    s += np.sum(k[1:] * th[1 : N + 1] ** 2 + 2 * np.sqrt(k[1:] + 1) * a * th[1 : N + 1] * th[2 : N + 2]) * t**4
    s += np.sum(k * om**2 + 2 * np.sqrt(k + 1) * a * om * omp[:, 1:]) * t**6
    return float(a**2 + s / nrm)


def mean_photon_harmonic_special(amps: PerturbativeAmplitudes, n: int, t: float) -> float:
    a, th, om = _special(amps)
    N = amps.cutoff
    c = amps.params.chi_of(n)
    w = om[amps.row(n)]
    nrm = norm_squared(amps, t)
    s = 2 * c * a**n * w[0] * t**4
    s += (np.sum(w**2) - 2 * c * a**n * np.sum(th[1 : N + 1] * w[1:])) * t**6
    return float(c**2 * a ** (2 * n) * t**2 + s / nrm)


def g11_special(amps: PerturbativeAmplitudes, t: float) -> float:
    a, th, om = _special(amps)
    N = amps.cutoff
    k = np.arange(N + 1, dtype=float)
    nrm = norm_squared(amps, t)
    thk, th1, th2 = th[: N + 1], th[1 : N + 2], th[2 : N + 3]
    omp = _pad(om, 2)
    om1, om2 = omp[:, 1 : N + 2], omp[:, 2 : N + 3]
    s = -2 * math.sqrt(2) * a**2 * (th[2] + math.sqrt(2) * a * th[1]) * t**2
    s += np.sum(thk * (thk * k * (k - 1 + 4 * a**2) + 4 * a**3 * np.sqrt(k + 1) * th1)) * t**4
    s += 4 * np.sum(k * np.sqrt(k + 1) * a * thk * th1) * t**4
    s += 2 * np.sum(np.sqrt((k + 1) * (k + 2)) * a**2 * thk * th2) * t**4
    s += np.sum(om**2 * (k * (k - 1) + 4 * a**2 * k)) * t**6
    s += 4 * a**3 * np.sum(np.sqrt(k + 1) * om * om1) * t**6
    s += 2 * np.sum(np.sqrt((k + 1) * (k + 2)) * a**2 * om * om2) * t**6
    s += 4 * np.sum(k * np.sqrt(k + 1) * a * om1 * om) * t**6
    return float(a**4 + s / nrm)


def gnn_special(amps: PerturbativeAmplitudes, n: int, t: float) -> float:
    a, th, om = _special(amps)
    N = amps.cutoff
    c = amps.params.chi_of(n)
    w = om[amps.row(n)]
    nrm = norm_squared(amps, t)
    s = 4 * c**3 * a ** (3 * n) * w[0] * t**6
    s += (4 * c**2 * a ** (2 * n) * np.sum(w**2) - 4 * c**3 * a ** (3 * n) * np.sum(w[1:] * th[1 : N + 1])) * t**8
    return float(c**4 * a ** (4 * n) * t**4 + s / nrm)


def g1n_special(amps: PerturbativeAmplitudes, n: int, t: float) -> float:
    a, th, om = _special(amps)
    N = amps.cutoff
    c = amps.params.chi_of(n)
    w = om[amps.row(n)]
    k = np.arange(N + 1, dtype=float)
    nrm = norm_squared(amps, t)
    wp = _pad(w, 1)
    thN = th[1 : N + 1]  # Theta_1..Theta_N
    s = -2 * c**2 * a ** (2 * n + 1) * th[1] * t**4
    s += 2 * c * a ** (n + 2) * (w[0] * t**4 - np.sum(thN * w[1:]) * t**6)
    s += 2 * c * a ** (n + 1) * (w[1] * t**4 - np.sum(np.sqrt(k[2:]) * th[1:N] * w[2:]) * t**6)
    s += np.sum(w**2 * (k + a**2)) * t**6
    s -= 2 * c * a**n * np.sum(k[1:] * thN * w[1:]) * t**6
    s += 2 * np.sum(np.sqrt(k + 1) * a * w * wp[1:]) * t**6
    s += c**2 * a ** (2 * n) * (np.sum(k[1:] * thN**2) * t**6 + np.sum(k * om**2) * t**8)
    s -= 2 * c * a ** (n + 1) * np.sum(np.sqrt(k + 1) * th[1 : N + 2] * w) * t**6
    omp = _pad(om, 1)
    s += 2 * c**2 * a ** (2 * n + 1) * (
        np.sum(np.sqrt(k[1:] + 1) * thN * th[2 : N + 2]) * t**6
        + np.sum(np.sqrt(k + 1) * om * omp[:, 1:]) * t**8
    )
    return float(c**2 * a ** (2 * n + 2) * t**2 + s / nrm)


def gnm_special(amps: PerturbativeAmplitudes, n: int, m: int, t: float) -> float:
    a, th, om = _special(amps)
    N = amps.cutoff
    cn, cm = amps.params.chi_of(n), amps.params.chi_of(m)
    wn, wm = om[amps.row(n)], om[amps.row(m)]
    nrm = norm_squared(amps, t)
    s = 2 * (cn * cm**2 * a ** (2 * m + n) * wn[0] + cn**2 * cm * a ** (2 * n + m) * wm[0]) * t**6
    s += 2 * cn * cm * a ** (n + m) * np.sum(wm * wn) * t**8
    s += np.sum(wn**2 * cm**2 * a ** (2 * m) + wm**2 * cn**2 * a ** (2 * n)) * t**8
    s -= 2 * cn * cm**2 * a ** (2 * m + n) * np.sum(wn[1:] * th[1 : N + 1]) * t**8
    s -= 2 * cm * cn**2 * a ** (2 * n + m) * np.sum(wm[1:] * th[1 : N + 1]) * t**8
    return float(cn**2 * cm**2 * a ** (2 * n + 2 * m) * t**4 + s / nrm)


@dataclass
class CorrelationReport:
    """Every one-time observable at a single instant.

    Mode keys: ``1`` for the driving field, harmonic order otherwise. Pair
    keys are sorted tuples. ``E`` and ``R`` are keyed by harmonic pairs.
    """

    t: float
    N: dict[int, float] = field(default_factory=dict)
    G: dict[tuple[int, int], float] = field(default_factory=dict)
    gamma: dict[tuple[int, int], float] = field(default_factory=dict)
    R: dict[tuple[int, int], float] = field(default_factory=dict)
    E: dict[tuple[int, int], float] = field(default_factory=dict)
    valid: bool = True

    @property
    def N1(self) -> float:
        return self.N[DRIVING]

    @property
    def gamma_auto(self) -> dict[int, float]:
        return {i: g for (i, j), g in self.gamma.items() if i == j}

    @property
    def gamma_cross(self) -> dict[tuple[int, int], float]:
        return {p: g for p, g in self.gamma.items() if p[0] != p[1]}


def correlation_report(amps: PerturbativeAmplitudes, t: float, negativity: bool = True) -> CorrelationReport:
    harms = amps.harmonics
    modes = (DRIVING,) + harms
    rep = CorrelationReport(t=t)
    T = _Sectors(amps, t)
    rep.N[DRIVING] = mean_photon_driving(amps, t)
    for n in harms:
        rep.N[n] = mean_photon_harmonic(amps, n, t)
    for i, j in combinations(modes, 2):
        rep.G[(i, j)] = _g1n(T, j) if i == DRIVING else _gnm(T, i, j)
    rep.G[(DRIVING, DRIVING)] = _g11(T)
    for n in harms:
        rep.G[(n, n)] = _gnn(T, n)
    for (i, j), g in rep.G.items():
        rep.gamma[(i, j)] = gamma_from(g, rep.N[i], rep.N[j])
    for n, m in combinations(harms, 2):
        rep.R[(n, m)] = cbs_ratio_from(rep.G[(n, m)], rep.G[(n, n)], rep.G[(m, m)])
        if negativity:
            rep.E[(n, m)] = log_negativity(amps, n, m, t)
    rep.valid = is_perturbative(amps, t) and all(v >= 0 for v in rep.N.values())
    return rep
