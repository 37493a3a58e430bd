import csv
import io
import json
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid

from mmeqd.cli import main
from mmeqd.report import csv_body


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = list(csv.reader(io.StringIO(csv_body(text))))
    return rows[0], [[float(x) if x not in ("", "H0", "H1", "cusum", "glr") else x for x in r]
                     for r in rows[1:]]


def test_pdf_integrates_to_one(capsys):
    code, out, _ = run(capsys, "pdf", "--n", "500", "--snr-db", "-15", "--tau-grid", "1:3:0.001")
    assert code == 0
    head, rows = table(out)
    assert head == ["tau", "f0", "f1"]
    assert len(rows) == 2001
    a = np.array(rows)
    for col in (1, 2):
        assert abs(trapezoid(a[:, col], a[:, 0]) - 1) < 1e-5
    assert "# n=500" in out and "# j_s=60" in out


def test_pdf_without_snr_is_f0_only(capsys):
    code, out, _ = run(capsys, "pdf", "--n", "50", "--tau-grid", "1:2:0.5")
    head, rows = table(out)
    assert code == 0 and head == ["tau", "f0"] and len(rows) == 3


def test_roc_sorted_and_contains_corner(capsys):
    t = time.time()
    code, out, _ = run(capsys, "roc", "--n", "500", "--snr-db", "-20,-15,-10,-5")
    assert time.time() - t < 60
    head, rows = table(out)
    assert code == 0 and head == ["h", "pfa", "pd", "snr_db", "n"]
    for snr in (-20, -15, -10, -5):
        sub = [r for r in rows if r[3] == snr]
        assert any(r[0] == 1 and r[1] == 1 and r[2] == 1 for r in sub)
        keys = [(r[3], r[1]) for r in sub]
        assert keys == sorted(keys)


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--n", "500", "--snr-db", "-15", "--threshold", "10,30")
    head, rows = table(out)
    assert code == 0 and head[:4] == ["h", "td_upper_blocks", "tfa_lower_blocks",
                                      "tfa_simple_blocks"]
    assert rows[0][1] == pytest.approx(169.18, abs=0.01)
    assert rows[1][3] == pytest.approx(np.exp(30), rel=1e-11)


def test_design(capsys):
    code, out, _ = run(capsys, "design", "--n", "500", "--target-pfa", "1")
    head, rows = table(out)
    assert code == 0 and rows[0][2] == 1.0
    code, out, _ = run(capsys, "design", "--n", "500", "--target-pfa", "0.01", "--snr-db", "-10")
    head, rows = table(out)
    assert head == ["n", "target_pfa", "h", "pfa", "snr_db", "pd"]
    assert rows[0][3] == pytest.approx(0.01, rel=1e-9)
    assert rows[0][5] == pytest.approx(0.4347, abs=1e-3)


@pytest.mark.parametrize("argv,category", [
    (("pdf", "--n", "1"), "domain"),
    (("design", "--n", "500", "--target-pfa", "2"), "design"),
    (("simulate", "--n", "500"), "domain"),
    (("frobnicate",), "usage"),
    (("roc", "--n", "500", "--snr-db", "x"), "domain"),
    (("pdf", "--config", "/nonexistent/cfg"), "config"),
])
def test_errors_one_line(capsys, argv, category):
    code, out, err = run(capsys, *argv)
    assert code != 0 and out == ""
    assert err.startswith(f"error: {category}: ")
    assert err.count("\n") == 1


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 50\nsnr_db = -10\ntau_grid = 1:2:0.25\n")
    _, out, _ = run(capsys, "pdf", "--config", str(cfg))
    assert "# n=50" in out and len(table(out)[1]) == 5
    _, out, _ = run(capsys, "pdf", "--config", str(cfg), "--n", "100")
    assert "# n=100" in out and "# snr_db=-10" in out


def test_simulate_and_sidecar(capsys, tmp_path):
    path = tmp_path / "sim.csv"
    argv = ["simulate", "--n", "500", "--snr-db", "-15", "--threshold", "3", "--seeds", "5",
            "--max-blocks", "500", "--out", str(path)]
    assert run(capsys, *argv)[0] == 0
    head, rows = table(path.read_text())
    assert head[:6] == ["algorithm", "n", "snr_db", "h", "seed", "hypothesis"]
    assert len(rows) == 10 and {r[5] for r in rows} == {"H0", "H1"}
    meta = json.loads((tmp_path / "sim.meta.json").read_text())
    assert meta["seed"] == 0 and meta["seeds"] == 5


def test_singleton_glr_matches_cusum_on_cli(capsys):
    base = ["simulate", "--n", "500", "--snr-db", "-15", "--threshold", "4", "--seeds", "8",
            "--max-blocks", "300"]
    _, c, _ = run(capsys, *base)
    _, g, _ = run(capsys, *base, "--algorithm", "glr", "--grid-db", "-15:-15:0.1")
    col = lambda text: [r[6] for r in table(text)[1]]
    assert col(c) == col(g)


def test_trace_writes_both_files(capsys, tmp_path):
    out = tmp_path / "tr.csv"
    code, _, _ = run(capsys, "trace", "--n", "500", "--snr-db", "-15", "--blocks", "20",
                     "--grid-db", "-20:-10:1", "--out", str(out))
    assert code == 0
    for name in ("cusum", "glr"):
        head, rows = table((tmp_path / f"tr.{name}.csv").read_text())
        assert head == ["k", "tau", "g", "alarmed", "alpha_hat_db", "m_star"] and len(rows) == 20


def test_curves_runs(capsys):
    code, out, _ = run(capsys, "curves", "--n", "500", "--snr-db", "-15", "--threshold", "3",
                       "--seeds", "10", "--horizon", "0,5000,10000")
    head, rows = table(out)
    assert code == 0 and head[:4] == ["horizon_samples", "snr_db", "p_fa", "p_d"]
    assert rows[0][2:4] == [0.0, 0.0] and len(rows) == 3
