"""Command-line interface: fit, predict, impute, simulate, evaluate, cv and study."""
from __future__ import annotations
import json
import logging
import os
import sys
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from eqtlkit.DataSet import DataSet, HoldoutSet
from eqtlkit.ModelFit import DimensionMismatchError, ModelFit
from eqtlkit.WeightSetArchive import WeightSetArchive
from eqtlkit.baselines import fit_knn_mt, fit_mt
from eqtlkit.config import PenaltyConfig, SolverConfig, config_section, read_flat_config, warn_unknown_keys
from eqtlkit.ecm import fit_covmt, impute, prediction_intervals
from eqtlkit.metrics import MetricReport, ld_adjusted_tpr, model_size, r2_from_predictions
from eqtlkit.simulation import SimConfig, default_settings, prune_correlated, run_study, simulate
from eqtlkit.tsv import DataFormatError, align_tables, read_matrix, read_splits, write_frame, write_matrix
from eqtlkit.tuning import METHODS, TuningGrid, grid_search, kfold_cv

LOGGER = logging.getLogger(__name__)

CLI_METHODS = ("covmt", "mt", "en", "knn-mt")


class Context:
    """Settings shared by all subcommands: the flat config file with the global flags applied on top."""

    def __init__(self, args: Namespace):
        self.flat: Dict[str, str] = read_flat_config(args.config) if args.config else {}
        warn_unknown_keys(self.flat, SolverConfig, PenaltyConfig, TuningGrid, SimConfig)
        threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
        self.solver = config_section(SolverConfig, self.flat, seed=args.seed, n_jobs=threads)
        self.progress: bool = args.progress

    def penalty(self) -> PenaltyConfig:
        return config_section(PenaltyConfig, self.flat)

    def grid(self) -> TuningGrid:
        return config_section(TuningGrid, self.flat)

    def sim(self) -> SimConfig:
        return config_section(SimConfig, self.flat, seed=self.solver.seed)


def _split_ids(path: str) -> Dict[str, List[str]]:
    groups: Dict[str, List[str]] = {"train": [], "valid": [], "test": []}
    for subject, split in read_splits(path).items():
        groups[split].append(subject)
    return groups


def _match_predictors(archive: WeightSetArchive, snps: List[str], X: np.ndarray, path: str) -> np.ndarray:
    """Genotype columns reordered to the archive's predictors, by name when all names are present."""
    if set(archive.predictor_names) <= set(snps):
        column = {s: j for j, s in enumerate(snps)}
        return X[:, [column[s] for s in archive.predictor_names]]
    if X.shape[1] != archive.p:
        raise DimensionMismatchError(f"{path} has {X.shape[1]} predictors, the weight set needs {archive.p}")
    LOGGER.warning("Predictor names in %s differ from the weight set, matching columns by position", path)
    return X


def _drop_unobserved(ids: List[str], X: np.ndarray, Y: np.ndarray, path: str) -> Tuple[List[str], np.ndarray, np.ndarray]:
    seen = (~np.isnan(Y)).any(axis=1)
    if not seen.all():
        LOGGER.warning("Skipping %d subjects without observed expression in %s", int((~seen).sum()), path)
    return [s for s, keep in zip(ids, seen) if keep], X[seen], Y[seen]


def _fit_archive(args: Namespace, ctx: Context) -> WeightSetArchive:
    splits = _split_ids(args.splits) if args.splits else None
    subjects = None if splits is None else splits["train"] + splits["valid"]
    ids, snps, X_raw, genes, Y_raw = align_tables(args.genotypes, args.expression, subjects)
    ids, X_raw, Y_raw = _drop_unobserved(ids, X_raw, Y_raw, args.expression)
    try:
        data = DataSet.from_arrays(
            X_raw, Y_raw, standardize=True, subject_ids=ids, predictor_names=snps, response_names=genes
        )
    except ValueError as exc:
        raise DataFormatError(args.expression, str(exc)) from exc

    kept = np.arange(data.p)
    if args.prune_threshold is not None:
        kept = prune_correlated(data.X, args.prune_threshold)
        LOGGER.info("Pruning at %g kept %d of %d predictors", args.prune_threshold, len(kept), data.p)
    work = DataSet(
        X=data.X[:, kept],
        Y=data.Y,
        mask=data.mask,
        subject_ids=data.subject_ids,
        predictor_names=[snps[j] for j in kept],
        response_names=genes,
    )

    cfg = ctx.solver
    trace_summary: dict = {}
    valid_r2: Optional[float] = None
    if splits is not None:
        index = {s: i for i, s in enumerate(ids)}
        train_rows = [index[s] for s in splits["train"] if s in index]
        valid_rows = [index[s] for s in splits["valid"] if s in index]
        search = grid_search(
            work.subset(train_rows), work.holdout(valid_rows), args.method, ctx.grid(), cfg, progress=ctx.progress
        )
        fit, penalty, valid_r2 = search.fit, search.best, search.valid_r2
        if search.trace is not None:
            trace_summary = search.trace.summary()
    elif args.method == "en":
        raise ValueError("The elastic net is tuned per response and needs --splits with validation subjects")
    else:
        penalty = ctx.penalty()
        if args.method == "covmt":
            fit, trace = fit_covmt(work, penalty, cfg)
            trace_summary = trace.summary()
        elif args.method == "knn-mt":
            fit = ModelFit.identity(work.p, work.q).with_beta(fit_knn_mt(work, penalty, cfg, ctx.grid().knn_neighbors))
        else:
            fit = ModelFit.identity(work.p, work.q).with_beta(fit_mt(work, penalty, cfg))

    # pruned predictors carry zero weight
    beta = np.zeros((data.p, data.q))
    beta[kept] = fit.beta
    return WeightSetArchive.from_fit(
        ModelFit(beta=beta, omega=fit.omega),
        data,
        args.method,
        penalty=penalty,
        solver=cfg,
        trace_summary=trace_summary,
        valid_r2=valid_r2,
    )


def cmd_fit(args: Namespace, ctx: Context) -> None:
    archive = _fit_archive(args, ctx)
    archive.save(args.output)
    print(json.dumps(dict(method=archive.method, nonzero=len(archive.weights), valid_r2=archive.valid_r2)))


def cmd_predict(args: Namespace, ctx: Context) -> None:
    archive = WeightSetArchive.load(args.archive)
    ids, snps, X = read_matrix(args.genotypes)
    if np.isnan(X).any():
        raise DataFormatError(args.genotypes, "genotypes must not contain NA")
    X = _match_predictors(archive, snps, X, args.genotypes)
    write_matrix(args.output, archive.predict_raw(X), ids, archive.response_names)


def impute_standardized(
    fit: ModelFit, X: np.ndarray, Y: np.ndarray, level: Optional[float] = None
) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
    """Conditional means, and interval bounds at `level`, on the standardized scale.

    Subjects without any observed response get the marginal prediction and marginal spread.
    """
    held = HoldoutSet(X=X, Y=Y, mask=~np.isnan(Y))
    if level is None:
        return impute(fit, held), None, None
    lower, upper = prediction_intervals(fit, held, level)
    return 0.5 * (lower + upper), lower, upper


def cmd_impute(args: Namespace, ctx: Context) -> None:
    archive = WeightSetArchive.load(args.archive)
    ids, snps, X_raw, genes, Y_raw = align_tables(args.genotypes, args.expression)
    if genes != archive.response_names:
        raise DimensionMismatchError(f"{args.expression} responses do not match the weight set {archive.response_names}")
    X = archive.standardize_X(_match_predictors(archive, snps, X_raw, args.genotypes))
    completed, lower, upper = impute_standardized(archive.to_fit(), X, archive.standardize_Y(Y_raw), args.intervals)
    write_matrix(args.output, archive.unstandardize_Y(completed), ids, genes)
    if lower is not None:
        out = Path(args.output)
        write_matrix(out.with_name(out.stem + ".lower" + out.suffix), archive.unstandardize_Y(lower), ids, genes)
        write_matrix(out.with_name(out.stem + ".upper" + out.suffix), archive.unstandardize_Y(upper), ids, genes)


def cmd_simulate(args: Namespace, ctx: Context) -> None:
    cfg = ctx.sim()
    sim = simulate(cfg)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = [f"subject{i + 1}" for i in range(cfg.n)]
    snps = [f"snp{j + 1}" for j in range(sim.X.shape[1])]
    genes = [f"tissue{k + 1}" for k in range(cfg.q)]
    write_matrix(out / "genotypes.tsv", sim.X, ids, snps)
    write_matrix(out / "expression.tsv", np.where(sim.mask, sim.Y, np.nan), ids, genes)
    write_matrix(out / "expression_complete.tsv", sim.Y, ids, genes)
    write_frame(out / "splits.tsv", pd.DataFrame({"subject_id": ids, "split": sim.split_labels}))
    write_matrix(out / "beta_star.tsv", sim.truth.beta_star, snps, genes, index_label="predictor")
    write_matrix(out / "support.tsv", sim.truth.support.astype(int), snps, genes, index_label="predictor")
    write_matrix(out / "sigma_E.tsv", sim.truth.sigma_E, genes, genes, index_label="response")
    write_frame(out / "D_E.tsv", pd.DataFrame({"response": genes, "noise_scale": sim.truth.D_E}))
    (out / "simulation.json").write_text(cfg.json(indent=2))
    LOGGER.info("Simulated %d subjects, %d predictors, %d tissues into %s", cfg.n, len(snps), cfg.q, out)


def cmd_evaluate(args: Namespace, ctx: Context) -> None:
    splits = _split_ids(args.splits)
    pred_ids, genes, predictions = read_matrix(args.predictions)
    e_ids, e_genes, Y = read_matrix(args.expression)
    if e_genes != genes:
        raise DimensionMismatchError(f"{args.predictions} and {args.expression} list different responses")
    e_index = {s: i for i, s in enumerate(e_ids)}
    p_index = {s: i for i, s in enumerate(pred_ids)}
    test_ids = [s for s in splits["test"] if s in p_index and s in e_index]
    train_ids = [s for s in splits["train"] if s in e_index]
    if not test_ids or not train_ids:
        raise DataFormatError(args.splits, "needs train subjects with expression and test subjects with predictions")
    train_Y = Y[[e_index[s] for s in train_ids]]
    train_means = np.where(np.isnan(train_Y), 0.0, train_Y).sum(axis=0) / np.maximum((~np.isnan(train_Y)).sum(axis=0), 1)
    Y_test = Y[[e_index[s] for s in test_ids]]
    r2 = r2_from_predictions(Y_test, predictions[[p_index[s] for s in test_ids]], train_means)

    size: Optional[float] = None
    tpr: Optional[float] = None
    if args.archive is not None:
        archive = WeightSetArchive.load(args.archive)
        beta_hat = archive.beta()
        size = model_size(beta_hat)
        if args.truth_dir is not None:
            if args.genotypes is None:
                raise ValueError("--truth-dir needs --genotypes for the LD correlations")
            _, _, support = read_matrix(Path(args.truth_dir) / "support.tsv")
            _, snps, X = read_matrix(args.genotypes)
            tpr = ld_adjusted_tpr(beta_hat, support.astype(bool), _match_predictors(archive, snps, X, args.genotypes))
    report = MetricReport(method=args.method, r2=r2, ld_tpr=tpr, model_size=size)
    rows = report.long_rows()
    rows += [dict(method=args.method, metric=f"test_r2:{g}", value=v) for g, v in zip(genes, r2.per_tissue)]
    write_frame(args.output, pd.DataFrame(rows))


def cmd_cv(args: Namespace, ctx: Context) -> None:
    ids, snps, X_raw, genes, Y_raw = align_tables(args.genotypes, args.expression)
    ids, X_raw, Y_raw = _drop_unobserved(ids, X_raw, Y_raw, args.expression)
    data = DataSet.from_arrays(
        X_raw, Y_raw, standardize=True, subject_ids=ids, predictor_names=snps, response_names=genes
    )
    result = kfold_cv(data, args.method, ctx.grid(), args.folds, ctx.solver, progress=ctx.progress)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_frame(out / "cv_report.tsv", result.report_frame())
    frames = []
    for fold in result.folds:
        frame = pd.DataFrame(fold.predictions, columns=genes)
        frame.insert(0, "fold", fold.fold)
        frame.insert(0, "subject_id", [ids[i] for i in fold.test_rows])
        frames.append(frame)
    write_frame(out / "cv_predictions.tsv", pd.concat(frames, ignore_index=True))
    write_matrix(
        out / "omega_support_frequency.tsv", result.omega_support_frequency, genes, genes, index_label="response"
    )
    print(json.dumps(dict(method=args.method, folds=args.folds, mean_test_r2=result.mean_r2)))


def cmd_study(args: Namespace, ctx: Context) -> None:
    settings = default_settings()
    if args.setting:
        settings = [s for s in settings if s.name in args.setting]
    frame = run_study(settings, args.methods, args.replications, ctx.sim(), ctx.grid(), ctx.solver, ctx.progress)
    write_frame(args.output, frame)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="eqtlkit", description="Multi-tissue eQTL weights from partially observed expression")
    parser.add_argument("--seed", type=int, default=None, help="Random seed (overrides the config file)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: all cores)")
    parser.add_argument("--config", default=None, help="Flat 'key = value' configuration file")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--progress", action="store_true", help="Show progress bars on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="Fit eQTL weights and save a weight-set archive")
    fit.add_argument("--method", choices=CLI_METHODS, default="covmt")
    fit.add_argument("--genotypes", required=True)
    fit.add_argument("--expression", required=True)
    fit.add_argument("--splits", default=None, help="subject_id/split TSV; tunes the penalties on the valid subjects")
    fit.add_argument("--prune-threshold", type=float, default=None, help="Drop predictors correlated above this")
    fit.add_argument("--output", required=True, help="Archive path (.json or .json.gz)")
    fit.set_defaults(handler=cmd_fit)

    predict = sub.add_parser("predict", help="Predict expression from genotypes")
    predict.add_argument("--archive", required=True)
    predict.add_argument("--genotypes", required=True)
    predict.add_argument("--output", required=True)
    predict.set_defaults(handler=cmd_predict)

    imp = sub.add_parser("impute", help="Complete partially observed expression")
    imp.add_argument("--archive", required=True)
    imp.add_argument("--genotypes", required=True)
    imp.add_argument("--expression", required=True)
    imp.add_argument("--intervals", type=float, default=None, metavar="LEVEL", help="Also write interval bounds")
    imp.add_argument("--output", required=True)
    imp.set_defaults(handler=cmd_impute)

    sim = sub.add_parser("simulate", help="Generate a simulated dataset with its truth files")
    sim.add_argument("--output-dir", required=True)
    sim.set_defaults(handler=cmd_simulate)

    ev = sub.add_parser("evaluate", help="Score predictions on the test subjects")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--expression", required=True)
    ev.add_argument("--splits", required=True)
    ev.add_argument("--archive", default=None, help="Weight set, for model size and LD-adjusted TPR")
    ev.add_argument("--truth-dir", default=None, help="Directory written by 'simulate'")
    ev.add_argument("--genotypes", default=None)
    ev.add_argument("--method", default="")
    ev.add_argument("--output", required=True)
    ev.set_defaults(handler=cmd_evaluate)

    cv = sub.add_parser("cv", help="k-fold cross-validation with validation-fold tuning")
    cv.add_argument("--method", choices=CLI_METHODS, default="covmt")
    cv.add_argument("--genotypes", required=True)
    cv.add_argument("--expression", required=True)
    cv.add_argument("--folds", type=int, default=5)
    cv.add_argument("--output-dir", required=True)
    cv.set_defaults(handler=cmd_cv)

    study = sub.add_parser("study", help="Replicated simulation study in long format")
    study.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    study.add_argument("--setting", nargs="+", choices=["rho", "r2", "s"], default=None)
    study.add_argument("--replications", type=int, default=50)
    study.add_argument("--output", required=True)
    study.set_defaults(handler=cmd_study)
    return parser


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.handler(args, Context(args))
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        LOGGER.debug("%s failed", args.command, exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_dispatch())
