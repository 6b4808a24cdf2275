"""Susceptibility models and photon-yield fits across pulse energies.

Three regimes are covered: a perturbative ladder ``chi_n = sqrt(C/n) p^n``,
the plateau form ``sqrt(C/n) / |alpha0|^n`` and a per-harmonic piecewise
model that switches from a constant to a power law at a transition
amplitude. The leading-order yield ``N_n = chi_n^2 |alpha0|^{2n} tau^2``
links the models to photons-per-pulse data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import ModelParams


class FitError(ValueError):
    """Dataset cannot be fitted."""


@dataclass(frozen=True)
class Perturbative:
    C: float
    p: float
    harmonics: tuple[int, ...]

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not 0 <= self.p < 1:
            raise ValueError("p must lie in [0, 1)")
        object.__setattr__(self, "harmonics", tuple(sorted(self.harmonics)))

    @classmethod
    def from_reference(cls, chi_ref: float, n_ref: int, p: float, harmonics: Iterable[int]) -> Perturbative:
        """Choose ``C`` so that ``chi_{n_ref}`` equals ``chi_ref``."""
        return cls(n_ref * chi_ref**2 / p ** (2 * n_ref), p, tuple(harmonics))

    def chi(self, n: int, alpha0_abs: float) -> float:
        return math.sqrt(self.C / n) * self.p**n


@dataclass(frozen=True)
class Plateau:
    C: float
    harmonics: tuple[int, ...]

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        object.__setattr__(self, "harmonics", tuple(sorted(self.harmonics)))

    @classmethod
    def from_reference(cls, chi_ref: float, n_ref: int, alpha0_abs: float, harmonics: Iterable[int]) -> Plateau:
        """Choose ``C`` so that ``chi_{n_ref}(alpha0_abs)`` equals ``chi_ref``."""
        return cls(n_ref * chi_ref**2 * alpha0_abs ** (2 * n_ref), tuple(harmonics))

    def chi(self, n: int, alpha0_abs: float) -> float:
        return math.sqrt(self.C / n) / alpha0_abs**n


@dataclass(frozen=True)
class HarmonicBranch:
    chi_pert: float
    knot: float
    eps: float

    def __post_init__(self):
        if not (self.chi_pert > 0 and self.knot > 0 and self.eps > 0):
            raise ValueError("chi_pert, knot and eps must be positive")


@dataclass(frozen=True)
class PiecewiseMaterial:
    """Constant below ``knot``; ``chi_pert (knot/|alpha0|)^(n - eps/2)`` above."""

    branches: Mapping[int, HarmonicBranch]
    name: str = "custom"

    def __post_init__(self):
        b = {int(n): (v if isinstance(v, HarmonicBranch) else HarmonicBranch(*v)) for n, v in self.branches.items()}
        object.__setattr__(self, "branches", dict(sorted(b.items())))

    @property
    def harmonics(self) -> tuple[int, ...]:
        return tuple(self.branches)

    def chi(self, n: int, alpha0_abs: float) -> float:
        b = self.branches[n]
        if alpha0_abs <= b.knot:
            return b.chi_pert
        return b.chi_pert * (b.knot / alpha0_abs) ** (n - b.eps / 2)


SusceptibilityModel = Perturbative | Plateau | PiecewiseMaterial

# (chi_pert, transition amplitude, energy exponent) per harmonic
MATERIALS: dict[str, PiecewiseMaterial] = {
    "gaas": PiecewiseMaterial({3: (0.069, 1.05, 4.6), 5: (0.01, 0.735, 6.0)}, "gaas"),
    "zno": PiecewiseMaterial({3: (0.041, 1.3, 4.0), 5: (0.035, 0.377, 6.0)}, "zno"),
    "si": PiecewiseMaterial({3: (0.027, 1.35, 5.6), 5: (4.31, 0.06, 5.8)}, "si"),
}


def material(name: str) -> PiecewiseMaterial:
    try:
        return MATERIALS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown material {name!r}; choose from {sorted(MATERIALS)}") from None


def eval_chi(model: SusceptibilityModel, alpha0_abs: float) -> dict[int, float]:
    if not alpha0_abs > 0:
        raise ValueError("alpha0_abs must be positive")
    return {n: model.chi(n, alpha0_abs) for n in model.harmonics}


def photon_yield(chi: float, alpha0_abs: float, n: int, tau: float) -> float:
    """Leading-order photons per pulse, ``chi^2 |alpha0|^{2n} tau^2``."""
    return chi**2 * alpha0_abs ** (2 * n) * tau**2


def spectrum_from_chi(chi: float, alpha0_abs: float, tau: float, n: int, omega: float = 1.0) -> float:
    """Radiated energy of harmonic ``n`` (photon yield times ``n omega``)."""
    return photon_yield(chi, alpha0_abs, n, tau) * n * omega


def chi_from_spectrum(I_n: float, alpha0_abs: float, tau: float, n: int, omega: float = 1.0) -> float:
    if not (I_n >= 0 and alpha0_abs > 0 and tau > 0 and omega > 0 and n > 0):
        raise ValueError("chi_from_spectrum needs positive inputs")
    return math.sqrt(I_n / (alpha0_abs ** (2 * n) * n * omega * tau**2))


def scale_transform(params: ModelParams, xi: complex) -> ModelParams:
    """``(alpha0, chi_n) -> (xi alpha0, chi_n / |xi|^n)`` at fixed interaction time.

    Leaves every leading-order harmonic amplitude modulus unchanged.
    """
    if xi == 0:
        raise ValueError("xi must be nonzero")
    s = abs(xi)
    chi = {n: c / s**n for n, c in params.chi.items()}
    return ModelParams(params.alpha0 * xi, params.cutoff, chi, params.omega)


def time_transform(params: ModelParams, tau: float, xi: float) -> tuple[ModelParams, float]:
    """``(chi, tau) -> (chi / xi, xi tau)``; the products ``chi tau`` are kept."""
    if not xi > 0:
        raise ValueError("xi must be positive")
    chi = {n: c / xi for n, c in params.chi.items()}
    return ModelParams(params.alpha0, params.cutoff, chi, params.omega), tau * xi


@dataclass
class PulseEnergyDataset:
    """Photons per pulse against pulse-energy proxy ``|alpha0|^2``."""

    energy: np.ndarray
    counts: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.energy = np.asarray(self.energy, dtype=float)
        if self.energy.ndim != 1:
            raise ValueError("energy must be one-dimensional")
        if np.any(~(self.energy > 0)):
            raise ValueError("energies must be positive")
        if np.any(np.diff(self.energy) <= 0):
            i = int(np.argmax(np.diff(self.energy) <= 0)) + 1
            raise ValueError(f"energies must increase strictly (row {i + 1})")
        counts = {}
        for n, c in sorted(self.counts.items()):
            c = np.asarray(c, dtype=float)
            if c.shape != self.energy.shape:
                raise ValueError(f"column n{n} has {c.size} rows, expected {self.energy.size}")
            bad = np.flatnonzero(~(c >= 0))
            if bad.size:
                raise ValueError(f"count n{n} must be >= 0 (row {bad[0] + 1})")
            counts[int(n)] = c
        self.counts = counts

    @property
    def harmonics(self) -> tuple[int, ...]:
        return tuple(self.counts)

    def __len__(self) -> int:
        return self.energy.size

    @classmethod
    def read_csv(cls, path: str | Path) -> PulseEnergyDataset:
        """Read ``energy,n3,n5,...``; ``#`` lines are skipped.

        Errors name the 1-based data row.
        """
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        reader = csv.reader(lines)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty dataset") from None
        if not header or header[0] != "energy":
            raise ValueError(f"{path}: first column must be 'energy'")
        orders = []
        for h in header[1:]:
            if not (h.startswith("n") and h[1:].isdigit()):
                raise ValueError(f"{path}: bad column name {h!r}, expected n<order>")
            orders.append(int(h[1:]))
        rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise ValueError(f"{path}: row {i} is not numeric") from None
        if not rows:
            raise ValueError(f"{path}: no data rows")
        arr = np.array(rows)
        try:
            return cls(arr[:, 0], {n: arr[:, j + 1] for j, n in enumerate(orders)})
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["energy"] + [f"n{n}" for n in self.harmonics])
            for i, e in enumerate(self.energy):
                w.writerow([repr(float(e))] + [repr(float(self.counts[n][i])) for n in self.harmonics])


def synthetic_dataset(
    model: SusceptibilityModel, energies: Sequence[float], tau: float = math.pi
) -> PulseEnergyDataset:
    """Leading-order yields of ``model`` on an energy grid."""
    energy = np.asarray(energies, dtype=float)
    counts = {n: np.empty_like(energy) for n in model.harmonics}
    for i, e in enumerate(energy):
        a = math.sqrt(e)
        for n, c in eval_chi(model, a).items():
            counts[n][i] = photon_yield(c, a, n, tau)
    return PulseEnergyDataset(energy, counts)


MIN_SIDE = 3


@dataclass(frozen=True)
class ExponentFit:
    n: int
    eps: float
    C: float
    knot: float  # transition amplitude |alpha0|, sqrt of the energy abscissa
    knot_index: int
    residual: float
    single_regime: bool = False
    degenerate: bool = False

    def predict(self, energy: np.ndarray, tau: float) -> np.ndarray:
        """Yield from the fitted two-segment law."""
        e = np.asarray(energy, dtype=float)
        ek = self.knot**2
        upper = self.C * tau**2 * e ** (self.eps / 2)
        lower = self.C * tau**2 * ek ** (self.eps / 2) * (e / ek) ** self.n
        return np.where(e <= ek, lower, upper)


def _segment_fit(x: np.ndarray, y: np.ndarray, n: int, k: int) -> tuple[float, float, float]:
    """Continuous fit, slope ``n`` up to ``x[k]`` and free slope after.

    Returns ``(intercept, slope, residual)`` with the lower segment
    ``y = b + n x``.
    """
    xk = x[k]
    lo = np.minimum(x, xk)
    hi = np.maximum(x - xk, 0.0)
    M = np.column_stack([np.ones_like(x), hi])
    target = y - n * lo
    coef, *_ = np.linalg.lstsq(M, target, rcond=None)
    r = target - M @ coef
    return float(coef[0]), float(coef[1]), float(r @ r)


def fit_exponents(data: PulseEnergyDataset, n: int, tau: float = math.pi) -> ExponentFit:
    """Two-segment log-log fit of the yield of harmonic ``n``.

    Below the knot the slope in ``log energy`` is fixed to ``n``; above it
    the slope is ``eps/2``. The knot is scanned over data abscissae with at
    least three rows on either side. If a single power law fits as well as
    any split, the knot is placed at the matching end of the range and the
    result is flagged ``single_regime``.
    """
    if n not in data.counts:
        raise FitError(f"dataset has no column n{n}")
    rows = len(data)
    if rows < 2 * MIN_SIDE:
        raise FitError(
            f"need at least {2 * MIN_SIDE} rows ({MIN_SIDE} on each side of the knot), got {rows}"
        )
    y_lin = data.counts[n]
    x = np.log(data.energy)
    if np.ptp(y_lin) == 0:
        c0 = float(y_lin[0]) / tau**2
        return ExponentFit(n, 0.0, c0, math.sqrt(data.energy[0]), 0, 0.0, True, True)
    zero = np.flatnonzero(y_lin <= 0)
    if zero.size:
        raise FitError(f"count n{n} is zero at row {zero[0] + 1}; cannot fit in log space")
    y = np.log(y_lin)
    scale = max(1.0, float(y @ y))
    tol = 1e-12 * scale

    best = None
    for k in range(MIN_SIDE - 1, rows - MIN_SIDE):
        b, s, res = _segment_fit(x, y, n, k)
        if best is None or res < best[3] - tol:
            best = (k, b, s, res)
    k, b, s, res = best
    single = False
    # whole range perturbative: knot at the top
    r_pert = y - n * x
    b_pert = float(r_pert.mean())
    res_pert = float(((r_pert - b_pert) ** 2).sum())
    if res_pert <= res + tol:
        k, b, s, res, single = rows - 1, b_pert, float(n), res_pert, True
    # whole range on the upper branch: knot at the bottom
    A = np.column_stack([np.ones_like(x), x - x[0]])
    coef, *_ = np.linalg.lstsq(A, y - n * x[0], rcond=None)
    r = y - n * x[0] - A @ coef
    res_up = float(r @ r)
    if res_up < res - tol:
        k, b, s, res, single = 0, float(coef[0]), float(coef[1]), res_up, True
    xk = x[k]
    # upper segment: y = b + n xk + s (x - xk) = log(C tau^2) + s x
    log_c = b + n * xk - s * xk - 2 * math.log(tau)
    return ExponentFit(n, 2 * s, math.exp(log_c), math.sqrt(data.energy[k]), k, res, single)
