"""Command-line front-end.

Subcommands: simulate, fit, predict, cv, score, study.  Options may be given
in a flat JSON config file (``--config``); explicit flags override config
values, which override built-in defaults.  Every output file is stamped with
a schema version.  Exit codes: 0 success, 2 usage error, 3 unreadable
config, 4 data/spec validation failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import pandas as pd

from .basis import build_for_resolution
from .cv import run_cv
from .data import ModelSpec, load_csv, validate, write_csv
from .exceptions import ConfigurationError, DataError, FitError
from .inference import FitOptions, FittedModel, fit
from .metrics import ScoreReport, score_predictions
from .prediction import PredictionTargets, draw_predictions, predict_index, summarize
from .simulation import (
    STUDY_SCHEMA_VERSION,
    AdditiveFieldSpec,
    ScenarioSpec,
    generate_additive_field,
    generate_siisdm,
    run_study,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_VALIDATION = 4

CSV_SCHEMA_VERSION = 1


def _error_record(code: int, kind: str, message: str) -> int:
    json.dump({"error": kind, "message": message, "exit_code": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def _apply_thread_cap() -> None:
    cap = os.environ.get("SIISDM_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "XLA_FLAGS"):
            if var == "XLA_FLAGS":
                os.environ.setdefault(
                    var, f"--xla_cpu_multi_thread_eigen=false "
                         f"intra_op_parallelism_threads={cap}"
                )
            else:
                os.environ.setdefault(var, cap)


def _stamped_csv(frame: pd.DataFrame, path: str, seed) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema_version={CSV_SCHEMA_VERSION} seed={seed}\n")
        frame.to_csv(fh, index=False)


def _model_spec_from_args(args, dataset) -> ModelSpec:
    variant = args.model.replace("-", "_")
    basis = build_for_resolution(dataset.bounding_box(), args.basis_resolution)
    return ModelSpec(
        variant=variant,
        link=getattr(args, "link", None) if variant == "single_index" else None,
        reference_survey=(
            getattr(args, "reference_survey", None) if variant == "additive_field" else None
        ),
        basis_config=basis,
        include_fine_scale=bool(getattr(args, "fine_scale", False)),
    )


def _load_targets(path: str, fitted: FittedModel) -> PredictionTargets:
    df = pd.read_csv(path, comment="#")
    for col in ("coord_x", "coord_y"):
        if col not in df.columns:
            raise DataError(f"targets file needs a {col!r} column")
    missing = [c for c in fitted.covariate_names if c not in df.columns]
    if missing:
        raise DataError(f"targets file is missing covariate column(s) {missing}")
    return PredictionTargets(
        coords=df[["coord_x", "coord_y"]].to_numpy(dtype=float),
        covariates=df[list(fitted.covariate_names)].to_numpy(dtype=float),
        log_offsets=(
            df["log_offset"].to_numpy(dtype=float) if "log_offset" in df.columns else None
        ),
    )


# ---------------------------------------------------------------- commands


def _cmd_simulate(args) -> int:
    if args.af_case is not None:
        spec = AdditiveFieldSpec(
            case=args.af_case, grid_side=args.grid_side, seed=args.seed
        )
        data = generate_additive_field(spec)
    else:
        spec = ScenarioSpec(
            scenario=args.scenario, grid_side=args.grid_side, seed=args.seed
        )
        data = generate_siisdm(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    write_csv(data.train, os.path.join(args.out_dir, "train.csv"))
    write_csv(data.test, os.path.join(args.out_dir, "test.csv"))
    print(
        f"wrote {data.train.n_obs} training and {data.test.n_obs} test rows "
        f"to {args.out_dir}"
    )
    return EXIT_OK


def _cmd_fit(args) -> int:
    dataset = load_csv(args.data, standardize=args.standardize)
    spec = _model_spec_from_args(args, dataset)
    violations = validate(dataset, spec)
    hard = [v for v in violations if "p=1" not in v]
    if hard:
        for v in hard:
            print(f"validation: {v}", file=sys.stderr)
        return _error_record(EXIT_VALIDATION, "ValidationError", "; ".join(hard))
    options = FitOptions(seed=args.seed, outer_max_iter=args.max_iter)
    fitted = fit(dataset, spec, options=options)
    fitted.save(args.out)
    status = "converged" if fitted.converged else "NOT converged"
    print(f"fit {status}: nll={fitted.laplace_nll_value:.6f} -> {args.out}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    fitted = FittedModel.load(args.fit)
    targets = _load_targets(args.targets, fitted)
    draws = draw_predictions(
        fitted, targets, survey_id=args.survey, T=args.draws, seed=args.seed,
        trim_fraction=args.trim,
    )
    point, lower, upper = summarize(draws, interval_level=args.level)
    out = pd.DataFrame(
        {
            "coord_x": targets.coords[:, 0],
            "coord_y": targets.coords[:, 1],
            "survey": args.survey,
            "point": point,
            "lower": lower,
            "upper": upper,
        }
    )
    if fitted.spec.variant == "single_index":
        k_mean, k_sd = predict_index(fitted, targets, T=args.draws, seed=args.seed)
        out["kappa_mean"] = k_mean
        out["kappa_sd"] = k_sd
    _stamped_csv(out, args.out, args.seed)
    print(f"wrote {len(out)} predictions to {args.out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    fitted = FittedModel.load(args.fit)
    dataset = load_csv(args.data)
    report = ScoreReport(method=fitted.spec.variant)
    for j in range(1, dataset.n_surveys + 1):
        mask = dataset.survey_ids == j
        targets = PredictionTargets(
            coords=dataset.coords[mask],
            covariates=dataset.covariates[mask],
            log_offsets=dataset.log_offsets[mask],
        )
        draws = draw_predictions(
            fitted, targets, survey_id=j, T=args.draws, seed=args.seed + j
        )
        report.add_survey(j, score_predictions(draws, dataset.counts[mask]))
    _stamped_csv(report.to_frame(), args.out, args.seed)
    print(f"wrote scores for {dataset.n_surveys} survey(s) to {args.out}")
    return EXIT_OK


def _cmd_cv(args) -> int:
    dataset = load_csv(args.data, standardize=args.standardize)
    spec = _model_spec_from_args(args, dataset)
    violations = [v for v in validate(dataset, spec) if "p=1" not in v]
    if violations:
        return _error_record(EXIT_VALIDATION, "ValidationError", "; ".join(violations))
    per_fold, report, _ = run_cv(
        dataset,
        spec,
        n_folds=args.folds,
        blocks=(args.blocks_x, args.blocks_y),
        seed=args.seed,
        n_draws=args.draws,
        fit_options=FitOptions(seed=args.seed),
    )
    _stamped_csv(report.to_frame(), args.out, args.seed)
    if args.per_fold_out:
        _stamped_csv(per_fold, args.per_fold_out, args.seed)
    print(f"wrote {args.folds}-fold aggregate to {args.out}")
    return EXIT_OK


def _cmd_study(args) -> int:
    if args.af_case is not None:
        spec = AdditiveFieldSpec(case=args.af_case, grid_side=args.grid_side)
    else:
        spec = ScenarioSpec(scenario=args.scenario, grid_side=args.grid_side)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    table = run_study(
        spec,
        replicates=args.replicates,
        methods=methods,
        master_seed=args.seed,
        n_draws=args.draws,
        basis_resolution=args.basis_resolution,
        out_path=args.out,
    )
    n_fail = int((table["metric"] == "fit_failed").sum()) if len(table) else 0
    print(
        f"study complete: {args.replicates} replicate(s), "
        f"{len(methods)} method(s), {n_fail} failure(s) -> {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="siisdm",
        description="Fit, predict, simulate and score multi-survey "
        "count models with a shared spatial index.",
    )
    parser.add_argument("--config", help="flat JSON file of option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_seed(p):
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="generate a synthetic two-survey dataset")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--af-case", type=int, choices=(1, 2, 3), default=None)
    p.add_argument("--grid-side", type=int, default=51)
    p.add_argument("--out-dir", default=".")
    common_seed(p)
    p.set_defaults(func=_cmd_simulate)

    def model_flags(p):
        p.add_argument(
            "--model",
            default="single-index",
            choices=["independent",
                     "additive-constant", "additive_constant",
                     "additive-field", "additive_field",
                     "single-index", "single_index"],
        )
        p.add_argument("--link", choices=["fourpl", "ispline"], default="fourpl")
        p.add_argument("--reference-survey", type=int, default=1)
        p.add_argument("--basis-resolution", type=int, choices=(1, 2, 3), default=1)
        p.add_argument("--fine-scale", action="store_true")
        p.add_argument("--standardize", action="store_true")

    p = sub.add_parser("fit", help="fit a model to a dataset CSV")
    p.add_argument("--data", required=True)
    model_flags(p)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--out", default="fit.json")
    common_seed(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="draw predictions at target locations")
    p.add_argument("--fit", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--survey", type=int, default=1)
    p.add_argument("--draws", type=int, default=500)
    p.add_argument("--trim", type=float, default=0.025)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", default="predictions.csv")
    common_seed(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("score", help="score a fitted model on held-out data")
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--draws", type=int, default=500)
    p.add_argument("--out", default="scores.csv")
    common_seed(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("cv", help="spatial block cross-validation")
    p.add_argument("--data", required=True)
    model_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--blocks-x", type=int, default=5)
    p.add_argument("--blocks-y", type=int, default=5)
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--out", default="cv_table.csv")
    p.add_argument("--per-fold-out", default=None)
    common_seed(p)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("study", help="replicated simulation study")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--af-case", type=int, choices=(1, 2, 3), default=None)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--grid-side", type=int, default=51)
    p.add_argument("--methods", default="ID,AF,SI")
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--basis-resolution", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--out", default="study.csv")
    common_seed(p)
    p.set_defaults(func=_cmd_study)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()

    # pre-scan for --config so file values become defaults before full parsing
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
            if not isinstance(cfg, dict):
                raise ValueError("config must be a flat JSON object")
        except (OSError, ValueError) as exc:
            return _error_record(EXIT_CONFIG, "ConfigError", str(exc))
        defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
        parser.set_defaults(**defaults)
        # subparsers keep their own defaults; push the config into each one
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction):
                for sp in action.choices.values():
                    known = {a.dest for a in sp._actions}
                    sp.set_defaults(
                        **{k: v for k, v in defaults.items() if k in known}
                    )

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ConfigurationError) as exc:
        return _error_record(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except FitError as exc:
        return _error_record(EXIT_OTHER, "FitError", str(exc))
    except OSError as exc:
        return _error_record(EXIT_OTHER, "IOError", str(exc))
    except Exception as exc:  # noqa: BLE001 - last-resort error record
        return _error_record(EXIT_OTHER, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
