"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
failure.  Errors are reported on stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .bpdn import ABSOLUTE, RELATIVE, BpdnConfig
from .correspondence import align_model_to_template, correspond_model
from .cpd import CpdConfig
from .dictionary import build_dictionary_set, load_dictionary_set, save_dictionary_set
from .errors import DataError, NumericalError, ToothSparseError
from .evaluation import NAMED_PATTERNS, EvalSubject, parse_patterns, run_pattern_experiments
from .geometry import apply_transform
from .parallel import ordered_map, thread_count
from .predictor import PredictionConfig, predict
from .storage import (
    cohort_subject_ids, load_model, load_template, load_truth, read_model_dir,
    subject_dir, write_cohort, write_corresponded_cohort, write_json, write_teeth,
)
from .synthetic import SynthConfig, generate_cohort
from .teeth import ALL_LABELS, parse_labels

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
TRAIN_FRACTION = 100 / 133


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _error_record(kind: str, message: str, code: int, **extra) -> None:
    rec = {"error": kind, "message": message, "exit_code": code}
    rec.update(extra)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)


def _write_manifest(path: Path, command: str, argv, config: dict, inputs: dict, outputs: list, started: str,
                    seed=None) -> None:
    write_json(path, {
        "tool": "toothsparse",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "inputs": inputs,
        "outputs": sorted(outputs),
        "seed": seed,
        "kernel_backend": kernels.BACKEND,
        "started_at": started,
        "finished_at": _now(),
    })


def _cpd_config(args) -> CpdConfig:
    return CpdConfig(beta=args.cpd_beta, lam=args.cpd_lambda, outlier_weight=args.cpd_w,
                     max_iterations=args.cpd_max_iter, tolerance=args.cpd_tol)


def _prediction_config(args) -> PredictionConfig:
    if args.eps_abs is not None:
        bpdn = BpdnConfig(epsilon_mode=ABSOLUTE, epsilon_value=args.eps_abs)
    else:
        bpdn = BpdnConfig(epsilon_mode=RELATIVE, epsilon_value=args.eps_rel)
    return PredictionConfig(t=args.t, iterations=args.iters, cpd=_cpd_config(args), bpdn=bpdn,
                            relax_infeasible=not args.strict)


# ---------------------------------------------------------------- subcommands

def cmd_synth(args, argv) -> int:
    started = _now()
    points = {}
    if args.points is not None:
        points = {lab: args.points for lab in ALL_LABELS}
    cfg = SynthConfig(n_subjects=args.subjects, latent_rank=args.rank, noise_sigma=args.noise,
                      points_per_tooth=points, scramble=not args.no_scramble, seed=args.seed)
    template, subjects = generate_cohort(cfg)
    out = Path(args.out)
    write_cohort(out, template, subjects, generator=cfg.to_dict())
    _write_manifest(out / "run_manifest.json", "synth", argv, {"synth": cfg.to_dict()}, {},
                    ["cohort.json", "template", "subjects"], started, seed=args.seed)
    return EXIT_OK


def cmd_correspond(args, argv) -> int:
    started = _now()
    template = load_template(args.template)
    ids = cohort_subject_ids(args.cohort)
    cfg = _cpd_config(args)

    def one(sid):
        model = load_model(subject_dir(args.cohort, sid))
        transform = align_model_to_template(model, template)
        return sid, correspond_model(model, template, cfg, transform=transform), transform

    entries = ordered_map(one, ids)
    out = Path(args.out)
    write_corresponded_cohort(out, entries, source=str(args.cohort))
    _write_manifest(out / "run_manifest.json", "correspond", argv, {"cpd": cfg.to_dict()},
                    {"cohort": str(args.cohort), "template": str(args.template)},
                    ["cohort.json", "subjects"], started)
    return EXIT_OK


def split_subjects(ids, train_count: int | None, train_fraction: float, seed: int) -> tuple[list, list]:
    """Seeded random train/test split; both halves keep cohort order."""
    n = len(ids)
    if train_count is None:
        train_count = max(1, int(round(n * train_fraction)))
    if not 1 <= train_count <= n:
        raise DataError(f"training count {train_count} is outside 1..{n}")
    chosen = set(np.random.default_rng(seed).permutation(n)[:train_count].tolist())
    train = [sid for i, sid in enumerate(ids) if i in chosen]
    test = [sid for i, sid in enumerate(ids) if i not in chosen]
    return train, test


def cmd_build_dict(args, argv) -> int:
    started = _now()
    ids = cohort_subject_ids(args.corresponded)
    if not 0 < args.train_fraction <= 1:
        raise DataError("--train-fraction must lie in (0, 1]")
    train, test = split_subjects(ids, args.train_count, args.train_fraction, args.seed)
    entries = []
    for sid in train:
        manifest, teeth = read_model_dir(subject_dir(args.corresponded, sid))
        if not manifest.get("corresponded"):
            raise DataError(f"subject {sid!r} is not corresponded; run 'correspond' first")
        entries.append((sid, teeth))
    dset = build_dictionary_set(entries, {"split": {"seed": args.seed, "train": train, "test": test}})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dictionary_set(dset, out)
    _write_manifest(out.with_name(out.name + ".manifest.json"), "build-dict", argv,
                    {"train_count": len(train), "train_fraction": args.train_fraction},
                    {"corresponded": str(args.corresponded)}, [out.name], started, seed=args.seed)
    return EXIT_OK


def _parse_missing(text: str) -> list[int]:
    try:
        return parse_labels(text)
    except DataError as exc:
        raise UsageError(f"--missing: {exc}") from None


def cmd_predict(args, argv) -> int:
    started = _now()
    missing = _parse_missing(args.missing)
    model = load_model(args.model)
    dropped = sorted(set(missing) & set(model.labels))
    model = model.without(dropped)
    truth = load_truth(args.model)
    dicts = load_dictionary_set(args.dict)
    template = load_template(args.template)
    config = _prediction_config(args)
    result = predict(model, missing, dicts, template, config, truth=truth)

    out = Path(args.out)
    write_teeth(out, result.predicted_subject)
    write_teeth(out / "template_frame", result.predicted_template)
    code = result.sparse_code.to_dict()
    code["subject_ids"] = list(dicts.subject_ids)
    write_json(out / "sparse_code.json", code)
    diag = result.diagnostics()
    diag["removed_from_model"] = dropped
    write_json(out / "diagnostics.json", diag)
    outputs = [f"{lab}.xyz" for lab in sorted(result.predicted_subject)]
    outputs += ["template_frame", "sparse_code.json", "diagnostics.json"]
    _write_manifest(out / "run_manifest.json", "predict", argv, config.to_dict(),
                    {"model": str(args.model), "dict": str(args.dict), "template": str(args.template),
                     "missing": missing}, outputs, started)

    failures = [i for i, rec in enumerate(result.iterations, 1) if not rec.converged]
    if failures:
        message = f"sparse coding did not converge in iterations {failures}"
        if args.strict:
            _error_record("non_convergence", message, EXIT_NUMERICAL, iterations=failures)
            return EXIT_NUMERICAL
        print(json.dumps({"warning": "non_convergence", "message": message, "iterations": failures},
                         sort_keys=True), file=sys.stderr)
    return EXIT_OK


def _truth_for(sid: str, cohort, template, cfg: CpdConfig) -> tuple[EvalSubject, str]:
    sdir = subject_dir(cohort, sid)
    model = load_model(sdir)
    truth = load_truth(sdir)
    if truth is not None:
        return EvalSubject(model, truth), "ground_truth"
    # no stored truth: correspond the full model and map back to its own frame
    transform = align_model_to_template(model, template)
    corr = correspond_model(model, template, cfg, transform=transform)
    back = transform.inverse()
    return EvalSubject(model, {lab: apply_transform(back, c) for lab, c in corr.items()}), "correspondence"


def cmd_evaluate(args, argv) -> int:
    started = _now()
    if args.mode == "single-sweep":
        if args.patterns is not None:
            raise UsageError("--patterns is only valid with --mode patterns")
        patterns = [(lab,) for lab in ALL_LABELS]
    else:
        if args.patterns is None:
            raise UsageError("--mode patterns requires --patterns FILE|table2|table3")
        if args.patterns in NAMED_PATTERNS:
            patterns = [tuple(p) for p in NAMED_PATTERNS[args.patterns]]
        else:
            try:
                text = Path(args.patterns).read_text(encoding="utf-8")
            except OSError as exc:
                raise DataError(f"cannot read pattern file: {exc}") from None
            patterns = parse_patterns(text)

    template_dir = args.template or Path(args.cohort) / "template"
    template = load_template(template_dir)
    dicts = load_dictionary_set(args.dict)
    train = set(dicts.subject_ids)
    test_ids = [sid for sid in cohort_subject_ids(args.cohort) if sid not in train]
    if args.max_subjects is not None:
        test_ids = test_ids[: args.max_subjects]
    if not test_ids:
        raise DataError("no test subjects: every cohort subject is a dictionary subject")
    config = _prediction_config(args)
    loaded = ordered_map(lambda sid: _truth_for(sid, args.cohort, template, config.cpd), test_ids)
    subjects = [s for s, _ in loaded]
    truth_source = sorted({src for _, src in loaded})
    split = {"train": sorted(train), "test": test_ids}
    report = run_pattern_experiments(subjects, template, dicts, patterns, config, split)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "details.csv").write_text(report.details_csv(), encoding="utf-8")
    (out / "summary.txt").write_text(report.summary_text(), encoding="utf-8")
    _write_manifest(out / "run_manifest.json", "evaluate", argv,
                    {"prediction": config.to_dict(), "mode": args.mode,
                     "patterns": [list(p) for p in patterns], "split": split, "truth_source": truth_source},
                    {"cohort": str(args.cohort), "dict": str(args.dict), "template": str(template_dir)},
                    ["results.csv", "details.csv", "summary.txt"], started)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_cpd_flags(p) -> None:
    d = CpdConfig()
    g = p.add_argument_group("non-rigid registration")
    g.add_argument("--cpd-beta", type=float, default=d.beta, help="kernel width on unit-diameter clouds")
    g.add_argument("--cpd-lambda", type=float, default=d.lam, help="smoothness weight")
    g.add_argument("--cpd-w", type=float, default=d.outlier_weight, help="outlier weight in [0, 1)")
    g.add_argument("--cpd-max-iter", type=int, default=d.max_iterations)
    g.add_argument("--cpd-tol", type=float, default=d.tolerance)


def _add_prediction_flags(p) -> None:
    p.add_argument("--iters", type=int, default=3, help="prediction iterations (default 3)")
    p.add_argument("--t", type=int, default=1, help="adjacency radius in columns (default 1)")
    eps = p.add_mutually_exclusive_group()
    eps.add_argument("--eps-rel", type=float, default=0.01,
                     help="residual tolerance as a fraction of the support norm (default 0.01)")
    eps.add_argument("--eps-abs", type=float, default=None, help="residual tolerance in mm")
    p.add_argument("--strict", action="store_true",
                   help="fail with exit 3 when the tolerance is infeasible or the solver does not converge")
    _add_cpd_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toothsparse", description="Predict missing teeth by sparse coding of adjacent teeth.")
    parser.add_argument("--version", action="version", version=f"toothsparse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic cohort with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--rank", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.0, help="point noise sigma, mm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=None, help="points per tooth for every tooth type")
    p.add_argument("--no-scramble", action="store_true", help="keep template point order in raw clouds")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("correspond", help="correspond every subject of a cohort to the template")
    p.add_argument("--cohort", required=True)
    p.add_argument("--template", required=True, help="template directory")
    p.add_argument("--out", required=True)
    _add_cpd_flags(p)
    p.set_defaults(func=cmd_correspond)

    p = sub.add_parser("build-dict", help="build the 28 tooth dictionaries from a corresponded cohort")
    p.add_argument("--corresponded", required=True)
    p.add_argument("--out", required=True, help="dictionary-set file (.tds)")
    p.add_argument("--train-count", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=TRAIN_FRACTION,
                   help="used when --train-count is absent (default 100/133)")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser("predict", help="predict missing teeth of one model")
    p.add_argument("--model", required=True, help="subject directory")
    p.add_argument("--missing", required=True, help="comma-separated FDI labels, e.g. 14,15")
    p.add_argument("--dict", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    _add_prediction_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run prediction experiments on held-out subjects")
    p.add_argument("--mode", required=True, choices=("single-sweep", "patterns"))
    p.add_argument("--patterns", default=None, help="pattern file, or table2 / table3")
    p.add_argument("--cohort", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--template", default=None, help="default: COHORT/template")
    p.add_argument("--out", required=True)
    p.add_argument("--max-subjects", type=int, default=None, help="evaluate only the first N test subjects")
    _add_prediction_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        thread_count()
        args = build_parser().parse_args(argv)
        return args.func(args, argv)
    except UsageError as exc:
        _error_record("usage", str(exc), EXIT_USAGE)
        return EXIT_USAGE
    except DataError as exc:
        _error_record(type(exc).__name__, str(exc), EXIT_DATA)
        return EXIT_DATA
    except NumericalError as exc:
        _error_record(type(exc).__name__, str(exc), EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except ToothSparseError as exc:
        _error_record(type(exc).__name__, str(exc), EXIT_DATA)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
