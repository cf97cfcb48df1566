"""Command line surface: parsing, file outputs, seed plumbing."""
import argparse
import subprocess
import sys

import pytest

from harrisflow.cli import main, parse_drift, parse_phi
from harrisflow.report import load_report_json


def test_parse_phi():
    assert parse_phi("gaussian").kind == "gaussian"
    spec = parse_phi("exponential_alpha:1.5")
    assert (spec.kind, spec.alpha) == ("exponential_alpha", 1.5)
    assert parse_phi("indicator").c_phi == 1.0
    assert parse_phi("cosine_series:40").n_terms == 40
    with pytest.raises(argparse.ArgumentTypeError):
        parse_phi("fourier")


def test_parse_drift():
    assert parse_drift("zero").is_zero
    aff = parse_drift("affine:0.5,-1")
    assert (aff.c0, aff.c1) == (0.5, -1.0)
    assert parse_drift("sin").tag == "sin"
    bm = parse_drift("beta_modulus:0.5,2.0")
    assert (bm.beta, bm.c_rho) == (0.5, 2.0)
    assert parse_drift("osl:neg_signed_sqrt").kind == "one_sided_lipschitz"
    with pytest.raises(argparse.ArgumentTypeError):
        parse_drift("quux:1")
    # bare unknown names route to the custom registry and fail there
    with pytest.raises(ValueError):
        parse_drift("quux")


def test_simulate_writes_csv(tmp_path, capsys):
    out = tmp_path / "run.csv"
    rc = main(["simulate", "--phi", "indicator", "--particles", "0,0.5",
               "--t", "0.25", "--dt-fine", str(2.0 ** -6), "--seed", "4",
               "--out", str(out)])
    assert rc == 0
    assert out.read_text().splitlines()[0].startswith("t,label_0,label_1")
    assert "wrote" in capsys.readouterr().out


def test_converge_inline_flags(tmp_path):
    out = tmp_path / "rate.csv"
    rc = main(["converge", "--phi", "gaussian", "--drift", "affine:0,-1",
               "--particles", "0", "--partitions", "2,4,8",
               "--dt-fine", str(2.0 ** -7), "--reps", "12", "--seed", "9",
               "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "# kind=strong_rate" in text
    assert "# seed=9" in text
    header = next(l for l in text.splitlines() if l.startswith("delta_n"))
    assert header.split(",")[:3] == ["delta_n", "y_sup_sq", "y_sup_sq_se"]


def test_study_requires_phi_or_config():
    with pytest.raises(SystemExit):
        main(["converge"])


def test_config_file_and_seed_override(tmp_path):
    cfgfile = tmp_path / "study.toml"
    cfgfile.write_text(
        "T = 1.0\npartitions = [2, 4]\ndt_fine = 0.0078125\nreps = 10\n"
        "seed = 1\nparticles = [0.0]\n"
        "\n[phi]\nkind = \"gaussian\"\n"
        "\n[drift]\nkind = \"affine\"\nc0 = 0.0\nc1 = -1.0\n")
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    assert main(["converge", "--config", str(cfgfile), "--out", str(a)]) == 0
    assert main(["converge", "--config", str(cfgfile), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["converge", "--config", str(cfgfile), "--seed", "2",
                 "--out", str(c)]) == 0
    assert "# seed=2" in c.read_text()
    assert c.read_bytes() != a.read_bytes()


def test_json_output_round_trips(tmp_path):
    out = tmp_path / "rate.json"
    rc = main(["converge", "--phi", "indicator", "--drift", "zero",
               "--particles", "0", "--partitions", "2,4", "--dt-fine", "0.125",
               "--reps", "6", "--seed", "3", "--format", "json", "--out", str(out)])
    assert rc == 0
    rep = load_report_json(out)
    assert rep.metadata["kind"] == "strong_rate"
    assert rep.fits["y_sup_sq"] is None  # zero drift degenerates the fit
    assert all(r["y_sup_sq"] == 0.0 for r in rep.rows)


def test_study_subcommands_smoke(tmp_path):
    fast = ["--partitions", "2,4", "--dt-fine", "0.125", "--seed", "5"]
    cases = (
        ("wasserstein", ["--particles", "0,1", "--drift", "affine:0,-1",
                         "--reps", "8"]),
        ("weak", ["--particles", "0", "--trials", "2", "--reps", "32"]),
        ("sharpness", ["--particles", "0", "--reps", "40"]),
    )
    for name, extra in cases:
        out = tmp_path / f"{name}.csv"
        rc = main([name, "--phi", "indicator", "--out", str(out)] + fast + extra)
        assert rc == 0, name
        assert out.read_text().startswith("# "), name


def test_dual_command(tmp_path):
    prefix = tmp_path / "d"
    rc = main(["dual", "--phi", "gaussian", "--starts", "0:0,0:1",
               "--t", "0.25", "--n-blocks", "4", "--dt-fine", str(2.0 ** -8),
               "--seed", "12", "--out", str(prefix)])
    assert rc == 0
    fwd = (tmp_path / "d_forward.csv").read_text().splitlines()
    back = (tmp_path / "d_backward.csv").read_text().splitlines()
    assert fwd[0] == "# reversed=false"
    assert back[0] == "# reversed=true"


def test_coalesce_prob_command(tmp_path):
    out = tmp_path / "cp.csv"
    rc = main(["coalesce-prob", "--phi", "indicator", "--gaps", "0.2,0.6",
               "--t", "0.25", "--reps", "200", "--dt", "0.0125",
               "--seed", "6", "--out", str(out)])
    assert rc == 0
    header = next(l for l in out.read_text().splitlines() if l.startswith("gap,"))
    assert header.split(",")[:3] == ["gap", "estimate", "se"]


def test_cluster_count_command(tmp_path):
    out = tmp_path / "cc.csv"
    rc = main(["cluster-count", "--phi", "indicator", "--n-grids", "2,4",
               "--interval", "0,1", "--t", "0.04", "--reps", "10",
               "--dt", "0.01", "--seed", "6", "--out", str(out)])
    assert rc == 0
    assert "# kind=cluster_flatness" in out.read_text()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "harrisflow.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "coalesce-prob" in proc.stdout
