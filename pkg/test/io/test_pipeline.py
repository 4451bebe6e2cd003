from pathlib import Path

import numpy as np
import pandas as pd
import pytest_check as check

from eqtlkit.cli import cli_dispatch
from eqtlkit.tsv import read_matrix

GOLDEN = Path(__file__).parent / "golden"

CONFIG = """\
n = 80
p = 30
q = 4
s = 2
per_tissue_eqtls = 4
n_train = 50
n_valid = 15
n_test = 15
block_edges = 2, 4
r2 = 0.3
alphas = 1.0
n_lambda_beta = 3
lambda_omegas = 0.1
max_ecm_iters = 15
"""

OUTPUTS = [
    "sim/genotypes.tsv",
    "sim/expression.tsv",
    "sim/expression_complete.tsv",
    "sim/splits.tsv",
    "sim/beta_star.tsv",
    "sim/support.tsv",
    "sim/simulation.json",
    "weights.json.gz",
    "predicted.tsv",
    "eval.tsv",
]


def run_pipeline(root: Path, threads: int = 1) -> None:
    root.mkdir()
    (root / "run.cfg").write_text(CONFIG)
    sim = root / "sim"

    def run(*argv):
        assert cli_dispatch(["--config", str(root / "run.cfg"), "--seed", "11", "--threads", str(threads), *argv]) == 0

    run("simulate", "--output-dir", str(sim))
    run(
        "fit", "--method", "covmt",
        "--genotypes", str(sim / "genotypes.tsv"),
        "--expression", str(sim / "expression.tsv"),
        "--splits", str(sim / "splits.tsv"),
        "--output", str(root / "weights.json.gz"),
    )
    run(
        "predict", "--archive", str(root / "weights.json.gz"),
        "--genotypes", str(sim / "genotypes.tsv"),
        "--output", str(root / "predicted.tsv"),
    )
    run(
        "evaluate",
        "--predictions", str(root / "predicted.tsv"),
        "--expression", str(sim / "expression_complete.tsv"),
        "--splits", str(sim / "splits.tsv"),
        "--archive", str(root / "weights.json.gz"),
        "--truth-dir", str(sim),
        "--genotypes", str(sim / "genotypes.tsv"),
        "--method", "covmt",
        "--output", str(root / "eval.tsv"),
    )


def test_evaluate_matches_frozen_report(tmp_path):
    out = tmp_path / "evaluate.tsv"
    code = cli_dispatch([
        "evaluate",
        "--predictions", str(GOLDEN / "predictions.tsv"),
        "--expression", str(GOLDEN / "expression.tsv"),
        "--splits", str(GOLDEN / "splits.tsv"),
        "--method", "frozen",
        "--output", str(out),
    ])
    check.equal(code, 0)
    check.equal(out.read_text(), (GOLDEN / "evaluate.tsv").read_text())


def test_pipeline_is_reproducible(tmp_path, capsys):
    run_pipeline(tmp_path / "first")
    run_pipeline(tmp_path / "second")
    capsys.readouterr()
    for name in OUTPUTS:
        check.equal((tmp_path / "first" / name).read_bytes(), (tmp_path / "second" / name).read_bytes(), name)

    report = pd.read_csv(tmp_path / "first" / "eval.tsv", sep="\t")
    check.equal(report.metric.tolist(), ["test_r2", "ld_tpr", "model_size"] + [f"test_r2:tissue{k}" for k in range(1, 5)])
    check.is_true((report.value <= 1.0).all())
    check.is_true(report.value.iloc[1:3].between(0, 1).all())


def test_threaded_pipeline_matches_single_thread(tmp_path, capsys):
    run_pipeline(tmp_path / "single")
    run_pipeline(tmp_path / "threaded", threads=2)
    capsys.readouterr()
    _, _, single = read_matrix(tmp_path / "single" / "predicted.tsv")
    _, _, threaded = read_matrix(tmp_path / "threaded" / "predicted.tsv")
    check.is_true(np.allclose(single, threaded, rtol=0, atol=1e-9))
    a = pd.read_csv(tmp_path / "single" / "eval.tsv", sep="\t")
    b = pd.read_csv(tmp_path / "threaded" / "eval.tsv", sep="\t")
    check.equal(a.metric.tolist(), b.metric.tolist())
    check.is_true(np.allclose(a.value, b.value, rtol=0, atol=1e-9))
