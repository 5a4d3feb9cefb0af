"""``paforge`` command line.

Exit codes: 0 success, 2 configuration/usage error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .design_space import DesignSpaceError, load_space, serialize_space
from .features import build_features, dataset_to_csv
from .pipeline import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_STAGE,
    ConfigError,
    PipelineConfig,
    StageError,
    config_from_manifest,
    derive_seeds,
    predictions_csv,
    run_pipeline,
    stage_cv,
    stage_rank,
    stage_sample,
    stage_simulate,
    write_atomic,
)
from .ranking import top_n
from .regressor import ModelFormatError, fit, load_model, save_model
from .sampler import SamplingError, samples_from_csv, samples_to_csv
from .sim_backend import SimulationError, make_backend, results_from_csv, results_to_csv
from .validation import benchmark_samplers, residuals_from_csv

log = logging.getLogger("paforge")


class MissingInput(ConfigError):
    def __init__(self, path, producer: str):
        super().__init__(f"missing input {path}; produce it with `paforge {producer}`")


def _read(path, producer: str, binary: bool = False):
    p = Path(path)
    if not p.is_file():
        raise MissingInput(path, producer)
    return p.read_bytes() if binary else p.read_text(encoding="utf-8")


def _space(args):
    try:
        return load_space(args.space)
    except OSError as exc:
        raise ConfigError(f"cannot read space file {args.space}: {exc}") from None
    except DesignSpaceError as exc:
        raise ConfigError(f"invalid space file {args.space}: {exc}") from None


def _config(args, **extra) -> PipelineConfig:
    keys = ("space", "backend", "fraction", "sampler", "iterations", "depth", "learning_rate", "l2", "k",
            "target", "tolerance", "seed", "workers", "mode_column", "sample_scope", "noise_sigma", "top")
    kw = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    kw.update(extra)
    return PipelineConfig(**kw)


def _emit(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


# --- subcommands -------------------------------------------------------------

def cmd_space(args) -> int:
    space = _space(args)
    if args.enumerate:
        _emit(args.out, samples_to_csv(space, range(space.size)))
    elif args.canonical:
        _emit(args.out, serialize_space(space))
    else:
        print(f"{space.size} points, {space.dim} parameters")
        for p in space.parameters:
            unit = f" [{p.unit}]" if p.unit else ""
            print(f"  {p.name}{unit}: {p.kind}, {p.n_levels} levels")
    return EXIT_OK


def cmd_sample(args) -> int:
    space = _space(args)
    ids = stage_sample(space, _config(args))
    _emit(args.out, samples_to_csv(space, ids))
    log.info("selected %d of %d points", len(ids), space.size)
    return EXIT_OK


def _backend(args, space):
    try:
        return make_backend(args.backend, space, derive_seeds(args.seed)["noise"], args.noise_sigma)
    except (OSError, ValueError, SimulationError) as exc:
        raise ConfigError(f"backend {args.backend!r}: {exc}") from None


def cmd_simulate(args) -> int:
    space = _space(args)
    ids = samples_from_csv(space, _read(args.samples, "sample"))
    backend = _backend(args, space)
    try:
        results = stage_simulate(space, ids, backend, args.workers)
    except SimulationError as exc:
        for f in exc.failures:
            print(f"point {f.point_id}: failed after {f.attempts} attempts: {f.error}", file=sys.stderr)
        if exc.results and args.out not in (None, "-"):
            write_atomic(str(args.out) + ".partial", results_to_csv(space, exc.results))
        raise StageError("simulate", exc) from exc
    _emit(args.out, results_to_csv(space, results))
    return EXIT_OK


def _dataset(args, space):
    results = results_from_csv(space, _read(args.results, "simulate"))
    return build_features(space, results)


def cmd_train(args) -> int:
    space = _space(args)
    ds = _dataset(args, space)
    model = fit(ds, _config(args).boost_config())
    if args.dataset_out:
        write_atomic(args.dataset_out, dataset_to_csv(ds))
    write_atomic(args.out, save_model(model))
    for name, v in sorted(zip(model.schema.names, model.importances), key=lambda t: -t[1]):
        log.info("importance %-24s %.4f", name, v)
    return EXIT_OK


def cmd_cv(args) -> int:
    space = _space(args)
    cfg = _config(args)
    rep = stage_cv(_dataset(args, space), cfg.boost_config(), cfg.k, derive_seeds(cfg.seed)["folds"])
    out = Path(args.out)
    write_atomic(out / "cv_folds.csv", rep.folds_csv())
    write_atomic(out / "cv_residuals.csv", rep.residuals_csv())
    write_atomic(out / "cv_summary.json", rep.summary_json())
    pooled = rep.pooled
    print(f"pooled R2={pooled.r2:.4f} RMSE={pooled.rmse_dbm:.4f} dBm MAE={pooled.mae_dbm:.4f} dBm (n={pooled.n})")
    return EXIT_OK


def _model(path):
    try:
        return load_model(_read(path, "train", binary=True))
    except ModelFormatError as exc:
        raise ConfigError(f"cannot load model {path}: {exc}") from None


def cmd_predict(args) -> int:
    from .ranking import predict_full_space

    space = _space(args)
    pred = predict_full_space(_model(args.model), space)
    _emit(args.out, predictions_csv(space, pred))
    return EXIT_OK


def cmd_rank(args) -> int:
    space = _space(args)
    model = _model(args.model)
    pool = [r for _, r in residuals_from_csv(_read(args.residuals, "cv"))]
    simulated = []
    if args.results:
        simulated = [r.point_id for r in results_from_csv(space, _read(args.results, "simulate"))]
    report, _ = stage_rank(space, {None: model}, {None: pool}, simulated, _config(args).spec())
    if args.top is not None:
        report = top_n(report, args.top)
    _emit(args.out, report.to_csv(space))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    if args.manifest:
        cfg = config_from_manifest(args.manifest, args.out)
    else:
        if not args.space:
            raise ConfigError("pipeline needs --space or --manifest")
        cfg = _config(args, out=args.out or "paforge-run")
    manifest = run_pipeline(cfg)
    cv = manifest["metrics"]["cv"]
    for key, summary in cv.items():
        pooled = summary["pooled"]
        print(f"[{key}] CV R2={pooled['r2']} RMSE={pooled['rmse_dbm']:.4f} dBm")
    print(f"simulated {manifest['metrics']['simulated']} of {manifest['metrics']['space_size']} points; "
          f"artifacts in {cfg.out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    space = _space(args)
    cfg = _config(args)
    oracle = _backend(args, space)
    seeds = range(args.seed, args.seed + args.seeds)
    table = benchmark_samplers(space, oracle, cfg.fraction, seeds, cfg.boost_config(), k=cfg.k, workers=args.workers)
    _emit(args.out, table.to_csv())
    summary = table.summary()
    if args.summary:
        write_atomic(args.summary, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name, s in summary.items():
        print(f"{name:8s} R2 {s['r2_mean']:.4f} +/- {s['r2_std']:.5f}  RMSE {s['rmse_mean']:.4f} dBm  "
              f"d_min {s['d_min_mean']:.4f}", file=sys.stderr)
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def _add_common(p, *, backend=False, model=False, sampling=False, target=False):
    p.add_argument("--space", required=True, help="design-space file")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, default=None)
    if backend:
        p.add_argument("--backend", default="synthetic",
                       help="synthetic | csv:<path> | command:<cmd> | command-batch:<cmd>")
        p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.1,
                       help="synthetic backend noise (dBm)")
    if sampling:
        p.add_argument("--fraction", type=float, default=0.35)
        p.add_argument("--sampler", choices=("maxmin", "random"), default="maxmin")
        p.add_argument("--k", type=int, default=5)
    if model:
        p.add_argument("--iterations", type=int, default=100)
        p.add_argument("--depth", type=int, default=2)
        p.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.5)
        p.add_argument("--l2", type=float, default=2.0)
    if target:
        p.add_argument("--target", type=float, default=28.0, help="minimum P2dB (dBm)")
        p.add_argument("--tolerance", type=float, default=0.4)
        p.add_argument("--top", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="paforge", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"paforge {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("space", help="validate or enumerate a design space")
    _add_common(p)
    p.add_argument("--enumerate", action="store_true", help="write every grid point as CSV")
    p.add_argument("--canonical", action="store_true", help="print the canonical file form")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_space)

    p = sub.add_parser("sample", help="select grid points to simulate")
    _add_common(p, sampling=True)
    p.add_argument("--mode-column", dest="mode_column", default=None)
    p.add_argument("--sample-scope", dest="sample_scope", choices=("global", "per-mode"), default="global")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", help="run the backend on sampled points")
    _add_common(p, backend=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit the boosted model")
    _add_common(p, model=True)
    p.add_argument("--results", required=True)
    p.add_argument("--dataset-out", dest="dataset_out", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold stratified cross-validation")
    _add_common(p, model=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="predict every grid point")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rank", help="rank the grid against a P2dB target")
    _add_common(p, target=True)
    p.add_argument("--model", required=True)
    p.add_argument("--residuals", required=True, help="cv_residuals.csv from `paforge cv`")
    p.add_argument("--results", default=None, help="results CSV, to flag simulated points")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--space", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--backend", default="synthetic")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.1)
    p.add_argument("--fraction", type=float, default=0.35)
    p.add_argument("--sampler", choices=("maxmin", "random"), default="maxmin")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=2.0)
    p.add_argument("--target", type=float, default=28.0)
    p.add_argument("--tolerance", type=float, default=0.4)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--mode-column", dest="mode_column", default=None)
    p.add_argument("--sample-scope", dest="sample_scope", choices=("global", "per-mode"), default="global")
    p.add_argument("--manifest", default=None, help="replay the run recorded in this manifest")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("benchmark", help="MaxMin LHS vs random sampling")
    _add_common(p, backend=True, sampling=True, model=True)
    p.add_argument("--seeds", type=int, default=20, help="number of seeds, starting at --seed")
    p.add_argument("--summary", default=None, help="write a JSON summary here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        for f in getattr(exc.cause, "failures", ()):
            print(f"point {f.point_id}: failed after {f.attempts} attempts: {f.error}", file=sys.stderr)
        print(f"paforge: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, SamplingError, ValueError) as exc:
        print(f"paforge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"paforge: simulation failed: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
