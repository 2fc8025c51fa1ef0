import argparse
import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from oracles import exhaustive_projection
from overparam.cli import (EXIT_NUMERICAL, NumericalFailure, ParseError, _execute, main,
                           read_signal_csv, write_signal_csv)
from overparam.harness import SignalSpec, add_noise, gen_piecewise_poly, metrics
from overparam.imaging import quantize, read_pgm, two_region_image, write_pgm


def report(out) -> dict:
    return json.loads((Path(out) / "report.json").read_text())


def csv_rows(path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


# file formats -------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=50))
def test_csv_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    write_signal_csv(path, values)
    assert_array_equal(read_signal_csv(path), values)


def test_csv_comments_and_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("# header\n1.5\n\n2\n  # note\n-3e-1\n")
    assert_array_equal(read_signal_csv(p), [1.5, 2.0, -0.3])
    p.write_text("1\n2\nabc\n")
    with pytest.raises(ParseError, match=":3:"):
        read_signal_csv(p)


@pytest.mark.parametrize("plain", [False, True])
def test_pgm_round_trip(tmp_path, plain):
    img = quantize(np.random.default_rng(0).uniform(-20, 280, (7, 9)))
    write_pgm(tmp_path / "a.pgm", img, plain=plain)
    assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)


# project ------------------------------------------------------------------


def test_project_step(tmp_path):
    sig = tmp_path / "s.csv"
    write_signal_csv(sig, [0.0] * 5 + [3.0] * 7)
    assert main(["project", str(sig), "--k", "1", "--n", "0", "--out", str(tmp_path / "o")]) == 0
    rep = report(tmp_path / "o")
    assert rep["breakpoints"] == [5]
    assert rep["sse"] < 1e-24
    assert_allclose(read_signal_csv(tmp_path / "o" / "fitted.csv"), [0.0] * 5 + [3.0] * 7)


def test_project_global_polynomial(tmp_path):
    sig = tmp_path / "s.csv"
    write_signal_csv(sig, np.arange(10.0) ** 2)
    assert main(["project", str(sig), "--k", "0", "--n", "2", "--out", str(tmp_path / "o")]) == 0
    rep = report(tmp_path / "o")
    assert rep["breakpoints"] == [] and len(rep["coefficients"]) == 1
    assert_allclose(rep["coefficients"][0], [1.0, -2.0, 1.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_project_matches_enumeration(tmp_path, seed):
    g = np.random.default_rng(seed).standard_normal(12)
    sig = tmp_path / "s.csv"
    write_signal_csv(sig, g)
    assert main(["project", str(sig), "--k", "2", "--n", "1", "--out", str(tmp_path / "o")]) == 0
    best, _ = exhaustive_projection(g, 2, 1)
    assert report(tmp_path / "o")["sse"] == pytest.approx(best, rel=1e-9)


def test_project_parse_error(tmp_path, capsys):
    sig = tmp_path / "s.csv"
    sig.write_text("1\n2\nx\n")
    assert main(["project", str(sig), "--k", "1", "--out", str(tmp_path / "o")]) == 3
    assert "s.csv:3:" in capsys.readouterr().err


def test_project_missing_k(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["project", "s.csv", "--out", str(tmp_path)])
    assert exc.value.code == 2


# denoise1d ----------------------------------------------------------------


def test_denoise1d_clean_input(tmp_path):
    f, _ = gen_piecewise_poly(SignalSpec(d=80, k=2, n=1, seed=2))
    sig = tmp_path / "s.csv"
    write_signal_csv(sig, f)
    assert main(["denoise1d", str(sig), "--sigma", "0", "--out", str(tmp_path / "o")]) == 0
    assert_allclose(read_signal_csv(tmp_path / "o" / "recovered.csv"), f, atol=1e-6)


def test_denoise1d_sscosamp_needs_k(tmp_path, capsys):
    sig = tmp_path / "s.csv"
    write_signal_csv(sig, np.zeros(10))
    with pytest.raises(SystemExit) as exc:
        main(["denoise1d", str(sig), "--method", "sscosamp", "--out", str(tmp_path / "o")])
    assert exc.value.code == 2
    assert "--k" in capsys.readouterr().err


@pytest.mark.parametrize("method", ["bgapn", "bgapn-cont", "sscosamp"])
def test_denoise1d_reduces_error(tmp_path, method):
    f, _ = gen_piecewise_poly(SignalSpec(d=200, k=4, n=1, seed=5))
    g = add_noise(f, 0.1, 6)
    write_signal_csv(tmp_path / "g.csv", g)
    write_signal_csv(tmp_path / "f.csv", f)
    argv = ["denoise1d", str(tmp_path / "g.csv"), "--method", method, "--sigma", "0.1",
            "--reference", str(tmp_path / "f.csv"), "--out", str(tmp_path / "o")]
    if method == "sscosamp":
        argv += ["--k", "4"]
    assert main(argv) == 0
    rep = report(tmp_path / "o")
    assert rep["metrics"]["mse"] < rep["input_metrics"]["mse"]
    b = np.loadtxt(tmp_path / "o" / "coefficients.csv", delimiter=",", skiprows=1)
    assert b.shape == (200, 2)


def test_numerical_failure_exit_code(tmp_path):
    def fail(args, run):
        run.report = {"error": "residual bound not met"}
        raise NumericalFailure("bound not met")

    ns = argparse.Namespace(command="denoise1d", seed=0, out=str(tmp_path), json=False, func=fail)
    assert _execute(ns) == EXIT_NUMERICAL
    assert (tmp_path / "manifest.json").exists()
    assert report(tmp_path)["error"] == "residual bound not met"


# image --------------------------------------------------------------------


def test_gradmap_constant(tmp_path):
    write_pgm(tmp_path / "c.pgm", np.full((12, 10), 77.0))
    assert main(["image", "gradmap", str(tmp_path / "c.pgm"), "--out", str(tmp_path / "o")]) == 0
    assert_array_equal(read_pgm(tmp_path / "o" / "gradmap.pgm"), 0)


def test_image_bad_magic(tmp_path):
    (tmp_path / "b.pgm").write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    assert main(["image", "gradmap", str(tmp_path / "b.pgm"), "--out", str(tmp_path / "o")]) == 3


def test_segment_two_regions(tmp_path):
    img, _ = two_region_image(32, 32)
    write_pgm(tmp_path / "a.pgm", add_noise(img, 5.0, 0))
    assert main(["image", "segment", str(tmp_path / "a.pgm"), "--sigma", "5",
                 "--out", str(tmp_path / "o")]) == 0
    labels = read_pgm(tmp_path / "o" / "labels.pgm")
    # boundary pixels carry label 0
    assert set(np.unique(labels)) == {0, 1, 2}
    assert report(tmp_path / "o")["regions"] == 2


def test_denoise_psnr_gain(tmp_path):
    img, _ = two_region_image(48, 48)
    noisy = quantize(add_noise(img, 20.0, 1))
    write_pgm(tmp_path / "n.pgm", noisy)
    write_pgm(tmp_path / "r.pgm", img)
    assert main(["image", "denoise", str(tmp_path / "n.pgm"), "--sigma", "20", "--reference",
                 str(tmp_path / "r.pgm"), "--out", str(tmp_path / "o")]) == 0
    rep = report(tmp_path / "o")
    assert rep["psnr"] >= rep["input_psnr"] + 6
    out = read_pgm(tmp_path / "o" / "denoised.pgm")
    # the report scores the unquantized estimate
    assert metrics(img, out).psnr == pytest.approx(rep["psnr"], abs=0.05)


# experiment and replay ----------------------------------------------------

REPLAYED = ("results.csv", "trials.csv", "results.json", "report.json", "plot.svg")


def run_and_replay(tmp_path, argv):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(first)]) == 0
    assert main(["replay", str(first / "manifest.json"), "--out", str(second)]) == 0
    for name in REPLAYED:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    return first


def test_sweep_cli(tmp_path):
    out = run_and_replay(tmp_path, ["experiment", "sweep", "--d", "60", "--k", "2",
                                    "--trials", "2", "--sigmas", "0.1,0.2,0.3",
                                    "--seed", "3"])
    rows = csv_rows(out / "results.csv")
    assert len(rows) == 3 * 4
    assert (out / "plot.svg").read_text().count("<polyline") == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["master"] == 3 and manifest["command"] == "experiment"


def test_cs_cli(tmp_path):
    out = run_and_replay(tmp_path, ["experiment", "cs", "--d", "40", "--k", "2", "--n", "1",
                                    "--grid", "1.0", "--trials", "5"])
    rows = csv_rows(out / "results.csv")
    assert len(rows) == 2
    for row in rows:
        assert 0 <= float(row["mean_success"]) <= 1 and int(row["trials"]) == 5
    assert len(csv_rows(out / "trials.csv")) == 10


def test_rip_cli(tmp_path):
    out = run_and_replay(tmp_path, ["experiment", "rip", "--d", "30", "--ms", "30",
                                    "--draws", "2", "--trials", "10", "--identity"])
    rows = csv_rows(out / "results.csv")
    assert len(rows) == 1 and float(rows[0]["mean_delta_hat"]) < 1e-12


def test_empty_grid_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "cs", "--grid", "", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_replay_bad_manifest(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    assert main(["replay", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 3
