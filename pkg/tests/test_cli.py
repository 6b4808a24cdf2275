import csv
import io
import math

import numpy as np
import pytest

from hhgqo import cli
from hhgqo.fitting import material, synthetic_dataset

PERTURBATIVE = """\
# perturbative regime
model.alpha0_abs = 1.0
model.cutoff = 11
chi.perturbative.chi_ref = 0.02
chi.perturbative.p = 0.3
"""

FIXTURE = """\
model.cutoff = 3
model.harmonics = 2,3
chi.table = 2:1e-3, 3:1e-3
time.start = 0.5
time.stop = 1.5
time.points = 3
"""


def parse_table(text):
    """Header dict and data rows of an emitted table."""
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# ") and " = " in line:
            k, v = line[2:].split(" = ", 1)
            meta[k] = v
        elif line and not line.startswith("#"):
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return meta, rows


def run(tmp_path, argv, config=None, name="out.csv"):
    args = list(argv)
    if config is not None:
        cfg = tmp_path / "run.cfg"
        cfg.write_text(config)
        args += ["--config", str(cfg)]
    out = tmp_path / name
    code = cli.main(args + ["--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


class TestEvolve:
    def test_perturbative_gamma_ordering(self, tmp_path):
        code, text = run(tmp_path, ["evolve", "--set", "time.stop=1.5", "--set", "time.points=7"], PERTURBATIVE)
        assert code == cli.EXIT_OK
        meta, rows = parse_table(text)
        last = rows[-1]
        assert float(last["t_cycles"]) == 1.5
        g = [float(last[f"gamma_{n}_{n}"]) for n in (3, 5, 7, 9, 11)]
        assert all(x < 1 for x in g)
        assert all(a > b for a, b in zip(g, g[1:]))
        assert last["valid"] == "1"
        assert meta["chi.perturbative.p"] == "0.3"
        assert meta["model.convention"] == "closed_form"

    def test_zero_chi_constant_columns(self, tmp_path):
        cfg = "chi.table = 3:0, 5:0\ntime.stop = 2\ntime.points = 5\n"
        code, text = run(tmp_path, ["evolve"], cfg)
        assert code == 0
        _, rows = parse_table(text)
        for col in ("N1", "N3", "N5", "gamma_1_1"):
            assert len({r[col] for r in rows}) == 1

    def test_omega_invariance(self, tmp_path):
        # time in cycles: scaling omega and chi together leaves the outputs fixed
        base = "chi.table = 3:0.02, 5:0.01\nmodel.alpha0_abs = 1.2\ntime.stop = 1.5\ntime.points = 4\n"
        _, a = run(tmp_path, ["evolve"], base, "a.csv")
        _, b = run(tmp_path, ["evolve"], base.replace("3:0.02, 5:0.01", "3:0.04, 5:0.02") + "model.omega = 2\n", "b.csv")
        ra, rb = parse_table(a)[1], parse_table(b)[1]
        for x, y in zip(ra, rb):
            for k in x:
                assert float(x[k]) == pytest.approx(float(y[k]), rel=1e-12, nan_ok=True)


class TestPairs:
    def test_perturbative_cbs(self, tmp_path):
        code, text = run(tmp_path, ["pairs", "--set", "time.t=1.5"], PERTURBATIVE)
        assert code == 0
        _, rows = parse_table(text)
        assert len(rows) == 10
        r35 = next(r for r in rows if r["n"] == "3" and r["m"] == "5")
        assert float(r35["R_n_m"]) == pytest.approx(1.2, abs=0.1)

    def test_single_harmonic_empty(self, tmp_path):
        code, text = run(tmp_path, ["pairs"], "chi.table = 3:0.02\ntime.t = 1\n")
        assert code == 0
        _, rows = parse_table(text)
        assert rows == []
        assert "n,m,gamma_n_m" in text


class TestSweep:
    def test_determinism_and_threads(self, tmp_path):
        args = ["sweep", "--material", "gaas", "--set", "sweep.points=15"]
        _, a = run(tmp_path, args, name="a.csv")
        _, b = run(tmp_path, args, name="b.csv")
        _, c = run(tmp_path, args + ["--threads", "4"], name="c.csv")
        assert a == b
        # the thread count is not part of the output
        assert a == c

    def test_env_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HHGQO_THREADS", "0")
        code, _ = run(tmp_path, ["sweep", "--material", "si"])
        assert code == cli.EXIT_CONFIG
        monkeypatch.setenv("HHGQO_THREADS", "3")
        assert run(tmp_path, ["sweep", "--material", "si", "--set", "sweep.points=5"])[0] == 0

    def test_columns(self, tmp_path):
        _, text = run(tmp_path, ["sweep", "--material", "zno", "--set", "sweep.points=3"])
        meta, rows = parse_table(text)
        assert list(rows[0]) == ["energy", "N3", "N5", "gamma_3_3", "gamma_5_5", "gamma_3_5", "R_3_5", "E_3_5", "valid"]
        assert meta["chi.material"] == "zno"
        assert meta["sweep.tau"] == "0.5"


class TestWigner:
    def test_zero_coupling(self, tmp_path):
        code, text = run(tmp_path, ["wigner", "--grid-points", "5", "--grid-extent", "2"], "chi.table = 3:0\ntime.t = 1\n")
        assert code == 0
        meta, rows = parse_table(text)
        assert len(rows) == 25
        assert all(float(r["W_deviation"]) == 0 for r in rows)
        assert meta["wigner.points"] == "5"

    def test_unknown_harmonic(self, tmp_path):
        code, _ = run(tmp_path, ["wigner", "--set", "wigner.harmonic=4"], "chi.table = 3:0.1\ntime.t = 1\n")
        assert code == cli.EXIT_CONFIG


class TestOracle:
    def test_zero_coupling(self, tmp_path):
        code, text = run(tmp_path, ["oracle"], "chi.table = 2:0, 3:0\ntime.t = 1\n")
        assert code == 0
        _, rows = parse_table(text)
        assert max(float(r["abs_err"]) for r in rows if r["abs_err"] != "nan") < 1e-10

    def test_fixture_parameters(self, tmp_path):
        code, text = run(tmp_path, ["oracle"], FIXTURE)
        assert code == 0
        _, rows = parse_table(text)
        n_rows = [r for r in rows if r["quantity"] in ("N", "G")]
        assert max(float(r["rel_err"]) for r in n_rows) < 1e-2

    def test_alarm_exit_keeps_table(self, tmp_path):
        cfg = "chi.table = 3:0.3\nmodel.alpha0_abs = 2\noracle.driving_dim = 8\noracle.harmonic_dim = 2\ntime.t = 1\n"
        code, text = run(tmp_path, ["oracle"], cfg)
        assert code == cli.EXIT_ALARM
        _, rows = parse_table(text)
        assert rows and any(r["alarm"] == "1" for r in rows)
        assert any(r["valid"] == "0" for r in rows)


class TestFit:
    def test_roundtrip(self, tmp_path):
        data = synthetic_dataset(material("gaas"), np.geomspace(0.1, 10, 30), tau=math.pi)
        path = tmp_path / "gaas.csv"
        data.write_csv(path)
        out = tmp_path / "fit.csv"
        code = cli.main(["fit", str(path), "--out", str(out)])
        assert code == 0
        _, rows = parse_table(out.read_text())
        eps = {int(r["n"]): float(r["eps"]) for r in rows}
        assert eps[3] == pytest.approx(4.6, abs=0.05)
        assert eps[5] == pytest.approx(6.0, abs=0.1)
        _, pred = parse_table((tmp_path / "fit.prediction.csv").read_text())
        assert len(pred) == 41

    def test_too_few_rows(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text("energy,n3\n1,2\n2,5\n")
        assert cli.main(["fit", str(path)]) == cli.EXIT_FIT

    def test_bad_row(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("energy,n3\n1,2\n2,x\n")
        assert cli.main(["fit", str(path)]) == cli.EXIT_FIT
        assert "row 2" in capsys.readouterr().err

    def test_constant_degenerate(self, tmp_path, capsys):
        path = tmp_path / "c.csv"
        path.write_text("energy,n3\n" + "".join(f"{e},4.0\n" for e in range(1, 9)))
        assert cli.main(["fit", str(path)]) == 0
        text = capsys.readouterr().out
        _, rows = parse_table(text.split("\n\n")[0])
        assert rows[0]["eps"] == "0.0" and rows[0]["degenerate"] == "1"

    def test_missing_file(self, tmp_path):
        assert cli.main(["fit", str(tmp_path / "nope.csv")]) == cli.EXIT_FIT


class TestConfigErrors:
    @pytest.mark.parametrize(
        "config, fragment",
        [
            ("chi.tabel = 3:0.1\ntime.t = 1\n", "chi.tabel"),
            ("time.t = 1\n", "susceptibility"),
            ("chi.table = 3:0.1\nchi.material = gaas\ntime.t = 1\n", "chi.table, chi.material"),
            ("chi.table = 3:0.1\n", "time.t"),
            ("chi.table = 3:0.1\ntime.t = 1\ntime.stop = 2\n", "time"),
            ("chi.table = 3:0.1\ntime.t = 1\nmodel.alpha0_abs = -1\n", "model.alpha0_abs"),
            ("chi.table = 3:0.1\ntime.t = 1\nmodel.convention = other\n", "model.convention"),
            ("chi.material = steel\ntime.t = 1\n", "chi.material"),
            ("chi.table = 3:0.1\ntime.t = abc\n", "time.t"),
            ("chi.table 3:0.1\n", "expected 'key = value'"),
        ],
    )
    def test_messages(self, tmp_path, capsys, config, fragment):
        code, _ = run(tmp_path, ["pairs"], config)
        assert code == cli.EXIT_CONFIG
        assert fragment in capsys.readouterr().err

    def test_set_overrides_config(self, tmp_path):
        _, text = run(tmp_path, ["pairs", "--set", "model.alpha0_abs=0.5", "--set", "time.t=1"], PERTURBATIVE)
        meta, _ = parse_table(text)
        assert meta["model.alpha0_abs"] == "0.5"

    def test_empty_override_unsets(self, tmp_path):
        code, text = run(tmp_path, ["evolve", "--set", "time.t=", "--set", "time.stop=1", "--set", "time.points=3"], PERTURBATIVE + "time.t = 1.5\n")
        assert code == 0
        meta, rows = parse_table(text)
        assert len(rows) == 3 and "time.t" not in meta

    def test_material_flag_replaces_config_spec(self, tmp_path):
        code, text = run(tmp_path, ["pairs", "--material", "si", "--set", "time.t=0.5"], PERTURBATIVE)
        assert code == 0
        assert parse_table(text)[0]["chi.material"] == "si"

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["pairs", "--config", str(tmp_path / "none.cfg")]) == cli.EXIT_CONFIG

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            cli.main(["plot"])
