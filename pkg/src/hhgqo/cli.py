"""Command-line front end.

Configuration is flat ``section.key = value`` text (``#`` starts a comment),
overridable with ``--set section.key=value``. Times are in optical cycles.
Every table is comma-separated with a ``#`` header that records the fully
resolved configuration, so identical inputs give byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 dataset or fit error,
4 truncation alarm from the oracle (the table is still written).
"""

from __future__ import annotations

import argparse
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import fitting
from .fitting import FitError, PulseEnergyDataset
from .fock import wigner
from .model import CONVENTIONS, ModelParams, PerturbativeAmplitudes, perturbative_amplitudes
from .observables import DRIVING, correlation_report, log_negativity, single_mode_density
from .oracle import OracleConfig, default_dims, observables_at

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3
EXIT_ALARM = 4

DEFAULTS = {
    "model.alpha0_abs": "1.0",
    "model.alpha0_phase": repr(-math.pi / 2),
    "model.omega": "1.0",
    "model.convention": "closed_form",
    "model.harmonics": "odd",
    "sweep.start": "0.002",
    "sweep.stop": "2.0",
    "sweep.points": "61",
    "sweep.spacing": "log",
    "sweep.tau": "0.5",
    "wigner.extent": "3.0",
    "wigner.points": "61",
    "oracle.harmonic_dim": "3",
    "oracle.method": "expm",
    "oracle.tolerance": "1e-12",
    "oracle.max_step": "0.05",
    "oracle.alarm": "1e-8",
    "fit.tau": "0.5",
    "fit.prediction_points": "41",
}

KNOWN = set(DEFAULTS) | {
    "model.cutoff",
    "chi.table",
    "chi.material",
    "chi.perturbative.C",
    "chi.perturbative.p",
    "chi.perturbative.chi_ref",
    "chi.perturbative.n_ref",
    "chi.plateau.C",
    "chi.plateau.chi_ref",
    "chi.plateau.n_ref",
    "time.t",
    "time.start",
    "time.stop",
    "time.points",
    "sweep.pair",
    "wigner.harmonic",
    "oracle.driving_dim",
    "fit.dataset",
    "fit.harmonics",
}

CHI_SPECS = ("chi.table", "chi.material", "chi.perturbative", "chi.plateau")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; message names the key."""


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[k] = v
    return out


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        out[k] = v
    return out


_MISSING = object()


class Settings:
    """Raw key/value store with typed, path-reporting accessors."""

    def __init__(self, raw: dict[str, str]):
        unknown = sorted(k for k in raw if k not in KNOWN)
        if unknown:
            raise ConfigError(f"unknown key {unknown[0]!r}")
        self.raw = {**DEFAULTS, **raw}
        self.used: dict[str, str] = {}

    def has(self, key: str) -> bool:
        return key in self.raw

    def get(self, key: str, conv: Callable = str, default=_MISSING):
        if key not in self.raw:
            if default is _MISSING:
                raise ConfigError(f"missing required key {key!r}")
            self.used[key] = default if isinstance(default, str) else _show(default)
            return default
        val = self.raw[key]
        self.used[key] = val
        try:
            return conv(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {val!r} ({exc})") from None

    def positive(self, key: str, conv: Callable = float, default=_MISSING):
        v = self.get(key, conv, default)
        if not v > 0:
            raise ConfigError(f"{key}: must be positive, got {v}")
        return v

    def resolved(self) -> list[tuple[str, str]]:
        return sorted(self.used.items())


def _show(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.replace(" ", "").split(",") if x]


def _chi_table(s: str) -> dict[int, float]:
    out = {}
    for item in s.replace(" ", "").split(","):
        if not item:
            continue
        n, c = item.split(":")
        out[int(n)] = float(c)
    return out


@dataclass
class ModelSpec:
    alpha0_abs: float
    phase: float
    omega: float
    cutoff: int
    harmonics: tuple[int, ...]
    chi_model: object  # fitting model or fixed table
    convention: str

    def params(self, alpha0_abs: float | None = None) -> ModelParams:
        a = self.alpha0_abs if alpha0_abs is None else alpha0_abs
        if isinstance(self.chi_model, dict):
            chi = dict(self.chi_model)
        else:
            chi = fitting.eval_chi(self.chi_model, a)
        alpha0 = a * complex(math.cos(self.phase), math.sin(self.phase))
        return ModelParams(alpha0, self.cutoff, chi, self.omega)

    def amplitudes(self, alpha0_abs: float | None = None) -> PerturbativeAmplitudes:
        return perturbative_amplitudes(self.params(alpha0_abs), self.convention)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega


def resolve_model(cfg: Settings) -> ModelSpec:
    present = [s for s in CHI_SPECS if any(k == s or k.startswith(s + ".") for k in cfg.raw)]
    if len(present) != 1:
        found = ", ".join(present) if present else "none"
        raise ConfigError(f"exactly one susceptibility spec required ({', '.join(CHI_SPECS)}); found {found}")
    spec = present[0]
    a = cfg.positive("model.alpha0_abs")
    phase = cfg.get("model.alpha0_phase", float)
    omega = cfg.positive("model.omega")
    conv = cfg.get("model.convention")
    if conv not in CONVENTIONS:
        raise ConfigError(f"model.convention: expected one of {CONVENTIONS}, got {conv!r}")

    def harmonics_for(cutoff: int) -> tuple[int, ...]:
        h = cfg.get("model.harmonics")
        if h == "odd":
            return tuple(range(3, cutoff + 1, 2))
        if h == "all":
            return tuple(range(2, cutoff + 1))
        try:
            return tuple(sorted(set(_int_list(h))))
        except ValueError:
            raise ConfigError(f"model.harmonics: expected 'odd', 'all' or a list, got {h!r}") from None

    if spec == "chi.table":
        table = cfg.get("chi.table", _chi_table)
        if not table:
            raise ConfigError("chi.table: empty table")
        cutoff = cfg.get("model.cutoff", int, max(table))
        harms = tuple(sorted(table))
        chi_model: object = table
    elif spec == "chi.material":
        try:
            mat = fitting.material(cfg.get("chi.material"))
        except ValueError as exc:
            raise ConfigError(f"chi.material: {exc}") from None
        harms = mat.harmonics
        cutoff = cfg.get("model.cutoff", int, max(harms))
        chi_model = mat
    else:
        cutoff = cfg.get("model.cutoff", int)
        harms = harmonics_for(cutoff)
        if not harms:
            raise ConfigError("model.harmonics: no harmonic orders selected")
        n_ref = cfg.get(f"{spec}.n_ref", int, harms[0])
        try:
            if spec == "chi.perturbative":
                p = cfg.get("chi.perturbative.p", float)
                if cfg.has("chi.perturbative.C"):
                    chi_model = fitting.Perturbative(cfg.positive("chi.perturbative.C"), p, harms)
                else:
                    ref = cfg.positive("chi.perturbative.chi_ref")
                    chi_model = fitting.Perturbative.from_reference(ref, n_ref, p, harms)
            else:
                if cfg.has("chi.plateau.C"):
                    chi_model = fitting.Plateau(cfg.positive("chi.plateau.C"), harms)
                else:
                    ref = cfg.positive("chi.plateau.chi_ref")
                    chi_model = fitting.Plateau.from_reference(ref, n_ref, a, harms)
        except ValueError as exc:
            raise ConfigError(f"{spec}: {exc}") from None
    spec_obj = ModelSpec(a, phase, omega, cutoff, harms, chi_model, conv)
    try:
        spec_obj.params()
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    return spec_obj


def resolve_times(cfg: Settings) -> list[float]:
    """Time grid in optical cycles."""
    if cfg.has("time.t") and any(cfg.has(k) for k in ("time.start", "time.stop", "time.points")):
        raise ConfigError("time: give either time.t or a time.start/stop/points grid, not both")
    if cfg.has("time.t"):
        t = cfg.get("time.t", float)
        if t < 0:
            raise ConfigError("time.t: must be >= 0")
        return [t]
    if not cfg.has("time.stop"):
        raise ConfigError("missing required key 'time.t' or 'time.stop'")
    start = cfg.get("time.start", float, 0.0)
    stop = cfg.get("time.stop", float)
    pts = cfg.positive("time.points", int, 31)
    if start < 0 or stop < start:
        raise ConfigError("time: need 0 <= time.start <= time.stop")
    return [float(x) for x in np.linspace(start, stop, pts)]


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("HHGQO_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"HHGQO_THREADS: not an integer: {env!r}") from None
    if n < 1:
        raise ConfigError(f"threads must be >= 1, got {n}")
    return n


def pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered parallel map."""
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


@dataclass
class Table:
    command: str
    columns: list[str]
    rows: list[list]
    meta: list[tuple[str, str]]
    notes: list[str] | None = None

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(f"# hhgqo {self.command}\n")
        for k, v in self.meta:
            buf.write(f"# {k} = {v}\n")
        for note in self.notes or []:
            buf.write(f"# note: {note}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(fmt(x) for x in row) + "\n")
        return buf.getvalue()


def write_output(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_evolve(cfg: Settings, threads: int = 1) -> Table:
    model = resolve_model(cfg)
    times = resolve_times(cfg)
    amps = model.amplitudes()
    modes = (DRIVING,) + model.harmonics

    def row(tc: float) -> list:
        rep = correlation_report(amps, tc * model.period, negativity=False)
        return (
            [tc]
            + [rep.N[i] for i in modes]
            + [rep.gamma[(i, i)] for i in modes]
            + [rep.valid]
        )

    cols = ["t_cycles"] + [f"N{i}" for i in modes] + [f"gamma_{i}_{i}" for i in modes] + ["valid"]
    return Table("evolve", cols, pmap(row, times, threads), cfg.resolved())


def _single_time(cfg: Settings) -> float:
    times = resolve_times(cfg)
    if len(times) != 1:
        raise ConfigError("time.t: this command needs a single time")
    return times[0]


def cmd_pairs(cfg: Settings, threads: int = 1) -> Table:
    model = resolve_model(cfg)
    tc = _single_time(cfg)
    rep = correlation_report(model.amplitudes(), tc * model.period)
    cols = ["n", "m", "gamma_n_m", "gamma_1_n", "gamma_1_m", "R_n_m", "E_n_m", "valid"]
    rows = []
    for n, m in combinations(model.harmonics, 2):
        rows.append(
            [n, m, rep.gamma[(n, m)], rep.gamma[(1, n)], rep.gamma[(1, m)], rep.R[(n, m)], rep.E[(n, m)], rep.valid]
        )
    return Table("pairs", cols, rows, cfg.resolved())


def sweep_grid(cfg: Settings) -> list[float]:
    start = cfg.positive("sweep.start")
    stop = cfg.positive("sweep.stop")
    pts = cfg.positive("sweep.points", int)
    if stop < start:
        raise ConfigError("sweep: need sweep.start <= sweep.stop")
    spacing = cfg.get("sweep.spacing")
    if spacing == "log":
        grid = np.geomspace(start, stop, pts)
    elif spacing == "linear":
        grid = np.linspace(start, stop, pts)
    else:
        raise ConfigError(f"sweep.spacing: expected 'log' or 'linear', got {spacing!r}")
    return [float(x) for x in grid]


def cmd_sweep(cfg: Settings, threads: int = 1) -> Table:
    """Observables at ``tau`` against pulse energy ``|alpha0|^2``."""
    model = resolve_model(cfg)
    if len(model.harmonics) < 2:
        raise ConfigError("sweep needs at least two harmonics")
    pair = cfg.get("sweep.pair", _int_list, list(model.harmonics[:2]))
    if len(pair) != 2 or pair[0] == pair[1] or any(p not in model.harmonics for p in pair):
        raise ConfigError(f"sweep.pair: need two distinct configured harmonics, got {pair}")
    n, m = sorted(pair)
    tau = cfg.positive("sweep.tau") * model.period
    grid = sweep_grid(cfg)

    def row(e: float) -> list:
        amps = model.amplitudes(math.sqrt(e))
        rep = correlation_report(amps, tau, negativity=False)
        E = log_negativity(amps, n, m, tau)
        return [
            e,
            rep.N[n],
            rep.N[m],
            rep.gamma[(n, n)],
            rep.gamma[(m, m)],
            rep.gamma[(n, m)],
            rep.R[(n, m)],
            E,
            rep.valid,
        ]

    cols = ["energy", f"N{n}", f"N{m}", f"gamma_{n}_{n}", f"gamma_{m}_{m}", f"gamma_{n}_{m}", f"R_{n}_{m}", f"E_{n}_{m}", "valid"]
    return Table("sweep", cols, pmap(row, grid, threads), cfg.resolved())


def wigner_deviation(amps: PerturbativeAmplitudes, n: int, t: float, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Wigner function of the normalized harmonic state minus that of vacuum."""
    from .fock import DensityMatrix

    rho = single_mode_density(amps, n, t).normalized()
    vac = np.zeros((2, 2), dtype=complex)
    vac[0, 0] = 1.0
    dev = DensityMatrix(rho.dims, rho.data - vac)
    return wigner(dev, q, p)


def cmd_wigner(cfg: Settings, threads: int = 1) -> Table:
    model = resolve_model(cfg)
    tc = _single_time(cfg)
    n = cfg.get("wigner.harmonic", int, max(model.harmonics))
    if n not in model.harmonics:
        raise ConfigError(f"wigner.harmonic: {n} is not a configured harmonic")
    ext = cfg.positive("wigner.extent")
    pts = cfg.positive("wigner.points", int)
    axis = np.linspace(-ext, ext, pts)
    W = wigner_deviation(model.amplitudes(), n, tc * model.period, axis, axis)
    rows = [[q, p, W[i, j]] for i, q in enumerate(axis) for j, p in enumerate(axis)]
    return Table("wigner", ["q", "p", "W_deviation"], rows, cfg.resolved())


def resolve_oracle(cfg: Settings, params: ModelParams) -> OracleConfig:
    hd = cfg.positive("oracle.harmonic_dim", int)
    try:
        dims = default_dims(params, hd)
        d = cfg.positive("oracle.driving_dim", int, dims[0])
        dims = type(dims)([d] + list(dims.dims[1:]))
        return OracleConfig(
            dims=dims,
            harmonic_dim=hd,
            method=cfg.get("oracle.method"),
            tolerance=cfg.get("oracle.tolerance", float),
            max_step=cfg.get("oracle.max_step", float),
            alarm=cfg.get("oracle.alarm", float),
        )
    except ValueError as exc:
        raise ConfigError(f"oracle: {exc}") from None


def _rel(a: float, b: float) -> float:
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return abs(a - b) / abs(b)


def cmd_oracle(cfg: Settings, threads: int = 1) -> tuple[Table, bool]:
    """Closed forms against the propagated reference, per time and quantity."""
    model = resolve_model(cfg)
    times = resolve_times(cfg)
    params = model.params()
    ocfg = resolve_oracle(cfg, params)
    amps = model.amplitudes()
    results = observables_at(params, [tc * model.period for tc in times], ocfg)
    rows = []
    alarm = False
    for tc, (obs, res) in zip(times, results):
        alarm = alarm or res.alarm
        rep = correlation_report(amps, tc * model.period)
        for name in ("N", "G", "gamma", "R", "E"):
            ref = getattr(obs, name)
            mine = getattr(rep, name)
            for key in sorted(ref, key=lambda k: (k,) if isinstance(k, int) else k):
                label = str(key) if isinstance(key, int) else f"{key[0]}_{key[1]}"
                a, b = mine[key], ref[key]
                rows.append([tc, name, label, a, b, abs(a - b), _rel(a, b), rep.valid, res.alarm])
    cols = ["t_cycles", "quantity", "modes", "closed_form", "oracle", "abs_err", "rel_err", "valid", "alarm"]
    notes = [f"max top-level population {max(max(r.top_population) for _, r in results)!r}"]
    return Table("oracle", cols, rows, cfg.resolved(), notes), alarm


def cmd_fit(cfg: Settings, dataset: str | None) -> tuple[Table, Table]:
    path = dataset or cfg.get("fit.dataset")
    cfg.used["fit.dataset"] = str(path)
    try:
        data = PulseEnergyDataset.read_csv(path)
    except OSError as exc:
        raise FitError(f"{path}: {exc.strerror}") from None
    except ValueError as exc:
        raise FitError(str(exc)) from None
    tau_c = cfg.positive("fit.tau")
    tau = tau_c * 2 * math.pi  # omega = 1 units of the dataset
    harms = cfg.get("fit.harmonics", _int_list, list(data.harmonics))
    if any(n not in data.harmonics for n in harms):
        raise ConfigError(f"fit.harmonics: {harms} not all present in {path}")
    fits = [fitting.fit_exponents(data, n, tau) for n in harms]
    cols = ["n", "eps", "C", "knot_alpha", "knot_energy", "residual", "single_regime", "degenerate"]
    rows = [[f.n, f.eps, f.C, f.knot, f.knot**2, f.residual, f.single_regime, f.degenerate] for f in fits]
    report = Table("fit", cols, rows, cfg.resolved())
    pts = cfg.positive("fit.prediction_points", int)
    grid = np.geomspace(data.energy[0], data.energy[-1], pts)
    pred_rows = [[e] + [float(f.predict(np.array([e]), tau)[0]) for f in fits] for e in grid]
    pred = Table("fit prediction", ["energy"] + [f"n{f.n}" for f in fits], pred_rows, cfg.resolved())
    return report, pred


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key; an empty value unsets it (repeatable)")
    common.add_argument("--material", choices=sorted(fitting.MATERIALS), help="shorthand for chi.material")
    common.add_argument("--threads", type=int, help="worker threads (fallback: HHGQO_THREADS)")

    parser = argparse.ArgumentParser(prog="hhgqo", description="Perturbative quantum optics of high-harmonic generation.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("evolve", parents=[common], help="time series of photon numbers and autocorrelations")
    sub.add_parser("pairs", parents=[common], help="pairwise correlations, CBS ratio and negativity")
    sub.add_parser("sweep", parents=[common], help="observables against pulse energy")
    w = sub.add_parser("wigner", parents=[common], help="Wigner deviation field of one harmonic")
    w.add_argument("--grid-extent", type=float, help="half-width of the square (q, p) grid")
    w.add_argument("--grid-points", type=int, help="points per axis")
    sub.add_parser("oracle", parents=[common], help="closed forms against the exact propagation")
    f = sub.add_parser("fit", parents=[common], help="fit energy exponents to photons-per-pulse data")
    f.add_argument("dataset", nargs="?", help="CSV with header energy,n3,n5,...")
    return parser


def load_settings(args: argparse.Namespace) -> Settings:
    raw: dict[str, str] = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from None
        raw.update(parse_config_text(text, args.config))
    if args.material:
        for k in list(raw):
            if k.startswith("chi."):
                del raw[k]
        raw["chi.material"] = args.material
    if getattr(args, "grid_extent", None) is not None:
        raw["wigner.extent"] = repr(args.grid_extent)
    if getattr(args, "grid_points", None) is not None:
        raw["wigner.points"] = str(args.grid_points)
    for k, v in parse_overrides(args.overrides).items():
        if v:
            raw[k] = v
        else:
            raw.pop(k, None)  # empty value unsets a file key
    return Settings(raw)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = resolve_threads(args.threads)
        cfg = load_settings(args)
        if args.command == "fit":
            report, pred = cmd_fit(cfg, args.dataset)
            if args.out and args.out != "-":
                write_output(report.render(), args.out)
                out = Path(args.out)
                write_output(pred.render(), str(out.with_name(out.stem + ".prediction" + out.suffix)))
            else:
                write_output(report.render() + "\n" + pred.render(), None)
            return EXIT_OK
        if args.command == "oracle":
            table, alarm = cmd_oracle(cfg, threads)
            write_output(table.render(), args.out)
            if alarm:
                print("hhgqo: truncation alarm raised; enlarge oracle dimensions", file=sys.stderr)
                return EXIT_ALARM
            return EXIT_OK
        cmd = {"evolve": cmd_evolve, "pairs": cmd_pairs, "sweep": cmd_sweep, "wigner": cmd_wigner}[args.command]
        write_output(cmd(cfg, threads).render(), args.out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"hhgqo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"hhgqo: fit error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
