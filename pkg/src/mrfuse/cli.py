"""Batch front-end: generate benchmarks, fuse, evaluate, sweep recurrences.

All reports are RFC-4180 CSV with 6 significant digits; identical command
lines (including seeds) produce byte-identical outputs.  Exit codes:
0 success, 1 invalid input (nothing written), 2 at least one case failed
(failures listed on stderr, remaining cases still processed).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import synth, tensor_io
from .baselines import majority_vote, staple_em
from .metrics import soft_dice
from .prior import PriorConfig
from .raters import RaterPanel, prop1_equivalence_error
from .solver import SolverConfig, recurrence_diagnostics, run_recurrence

METHODS = ("mv", "staple", "mrprism")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def load_solver_config(path: str | None, overrides: dict) -> SolverConfig:
    """Build a SolverConfig from an optional JSON file plus flag overrides.

    The JSON mirrors the config field names, with the prior nested under
    "prior".  Flags always win over file values.
    """
    doc = {}
    if path:
        doc = json.loads(Path(path).read_text())
    prior_doc = dict(doc.pop("prior", {}))
    for key in ("eta", "sigma_edge", "smoothing_iters"):
        if overrides.get(key) is not None:
            prior_doc[key] = overrides[key]
    solver_doc = dict(doc)
    for key in ("tau", "beta0", "gamma", "confidence_form", "convergence_ssim", "seed",
                "num_shuffles"):
        if overrides.get(key) is not None:
            solver_doc[key] = overrides[key]
    return SolverConfig(prior=PriorConfig(**prior_doc), **solver_doc)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config mirroring the solver fields")
    parser.add_argument("--tau", type=int)
    parser.add_argument("--beta0", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--confidence-form", dest="confidence_form",
                        choices=("prop1_posterior", "alg1_logmap"))
    parser.add_argument("--convergence-ssim", dest="convergence_ssim", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--sigma-edge", dest="sigma_edge", type=float)
    parser.add_argument("--smoothing-iters", dest="smoothing_iters", type=int)


def _config_from_args(args: argparse.Namespace) -> SolverConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in ("tau", "beta0", "gamma", "confidence_form", "convergence_ssim",
                    "seed", "eta", "sigma_edge", "smoothing_iters")
    }
    return load_solver_config(args.config, overrides)


def parse_rater_spec(text: str, num_classes: int) -> synth.RaterSpec:
    """Parse "boundary:radius=1,jitter=0.5" or "confusion:diag=0.75"."""
    kind, _, rest = text.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            params[key.strip()] = float(value)
    if kind == "boundary":
        return synth.RaterSpec(
            kind="boundary",
            radius=int(params.get("radius", 0)),
            jitter=params.get("jitter", 0.0),
        )
    if kind == "confusion":
        diag = params.get("diag", 0.8)
        return synth.RaterSpec(
            kind="confusion", confusion=synth.diagonal_confusion(num_classes, diag)
        )
    raise ValueError(f"unknown rater spec {text!r} (expected boundary:... or confusion:...)")


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        height, width = (int(v) for v in args.size.lower().split("x"))
    except ValueError:
        print(f"error: bad --size {args.size!r}, expected HxW", file=sys.stderr)
        return 1
    if args.raters:
        try:
            specs = [parse_rater_spec(s, args.classes) for s in args.raters]
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    else:
        specs = synth.standard_rater_specs(args.classes)
    for i, spec in enumerate(specs):
        spec.seed_offset = i

    cases = []
    for i in range(args.cases):
        image, gt = synth.generate_case((args.seed, i), height, width, args.classes)
        panel = synth.simulate_raters(gt, specs, (args.seed, i), args.classes)
        cases.append(
            synth.SyntheticCase(
                case_id=f"case{i:03d}", image=image, ground_truth=gt, panel=panel,
                specs=specs,
            )
        )
    manifest = synth.write_suite(cases, args.out)
    print(f"wrote {len(cases)} cases to {manifest}")
    return 0


def _load_case(case: tensor_io.CaseManifest) -> tuple[np.ndarray, RaterPanel]:
    image = tensor_io.read_image(case.image)
    labels = [tensor_io.read_hard_labels(p, case.num_classes) for p in case.raters]
    panel = RaterPanel(labels=labels, num_classes=case.num_classes,
                       rater_ids=list(case.rater_ids))
    return image, panel


def _fuse_one(case: tensor_io.CaseManifest, method: str, config: SolverConfig,
              out_dir: str) -> str | None:
    """Fuse a single case; returns an error message or None."""
    try:
        out = Path(out_dir)
        image, panel = _load_case(case)
        if method == "mv":
            fused = majority_vote(panel)
        elif method == "staple":
            fused = staple_em(panel).fused
        else:
            trace = run_recurrence(image, panel, config)
            fused = trace.final_fused
            for step in trace.steps:
                tensor_io.write_soft_map(
                    step.y_prime.astype(np.float32),
                    out / f"{case.case_id}_rec{step.index}.mrt1",
                )
            rows = recurrence_diagnostics(trace)
            header = list(rows[0].keys())
            _write_csv(out / f"{case.case_id}_trace.csv", header,
                       [[row[h] for h in header] for row in rows])
        tensor_io.write_soft_map(fused.astype(np.float32), out / f"{case.case_id}.mrt1")
        return None
    except Exception as exc:
        return f"case {case.case_id}: {exc}"


def cmd_fuse(args: argparse.Namespace) -> int:
    try:
        cases = tensor_io.load_manifest(args.manifest)
        config = _config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            errors = list(
                pool.map(_fuse_one, cases, [args.method] * len(cases),
                         [config] * len(cases), [str(out)] * len(cases))
            )
    else:
        errors = [_fuse_one(case, args.method, config, str(out)) for case in cases]

    failures = [e for e in errors if e is not None]
    for failure in failures:
        print(failure, file=sys.stderr)
    return 2 if failures else 0


def _case_ground_truth(case: tensor_io.CaseManifest) -> np.ndarray:
    if case.ground_truth is None:
        raise ValueError(f"case {case.case_id}: manifest has no ground_truth")
    return tensor_io.load_ground_truth(case.ground_truth, case.num_classes)


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        cases = tensor_io.load_manifest(args.manifest)
        pred_dir = Path(args.pred)
        loaded = []
        for case in cases:
            gt = _case_ground_truth(case)
            pred_path = pred_dir / f"{case.case_id}.mrt1"
            pred = tensor_io.read_soft_map(pred_path).astype(np.float64)
            if pred.shape != gt.shape:
                raise ValueError(
                    f"case {case.case_id}: prediction shape {pred.shape} "
                    f"does not match ground truth {gt.shape}"
                )
            loaded.append((case, pred, gt))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    rows = []
    means = []
    for case, pred, gt in loaded:
        result = soft_dice(pred, gt)
        for cls in range(1, case.num_classes):
            rows.append([case.case_id, cls, result.per_class[cls], result.foreground_mean])
        means.append(result.foreground_mean)
    rows.append(["aggregate", "all", float(np.mean(means)), float(np.mean(means))])
    _write_csv(Path(args.out), ["case_id", "class", "soft_dice", "mean"], rows)
    print(f"wrote {args.out}: mean foreground soft dice {np.mean(means):.6g}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        cases = tensor_io.load_manifest(args.manifest)
        config = _config_from_args(args)
        config.tau = args.max_tau
        inputs = [(_load_case(c), _case_ground_truth(c)) for c in cases]
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    num_classes = cases[0].num_classes
    per_rec: list[list[np.ndarray]] = [[] for _ in range(args.max_tau + 1)]
    for (image, panel), gt in inputs:
        trace = run_recurrence(image, panel, config)
        maps = trace.maps_by_recurrence()
        for rec in range(args.max_tau + 1):
            fused = maps[min(rec, len(maps) - 1)]
            per_rec[rec].append(soft_dice(fused, gt).per_class)

    rows = []
    for rec, collected in enumerate(per_rec):
        stacked = np.stack(collected)
        class_means = stacked.mean(axis=0)
        fg = class_means[1:] if num_classes > 1 else class_means
        rows.append([f"Rec{rec}", *class_means[1:], float(fg.mean())])
    header = ["recurrence"] + [f"class{c}" for c in range(1, num_classes)] + ["foreground_mean"]
    _write_csv(Path(args.out), header, rows)
    print(f"wrote {args.out}")
    return 0


def cmd_oracle_check(args: argparse.Namespace) -> int:
    max_err = prop1_equivalence_error(args.trials, args.seed)
    ok = max_err < 1e-10
    status = "PASS" if ok else "FAIL"
    print(f"{status}: max |posterior - oracle| = {max_err:.3e} over {args.trials} trials")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrfuse", description="Multi-rater segmentation fusion toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-rater benchmark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--cases", type=int, default=50)
    p.add_argument("--size", default="128x128", help="HxW")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--raters", nargs="*", default=None,
                   help='e.g. boundary:radius=1,jitter=0.5 confusion:diag=0.75')
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fuse", help="fuse every case in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=int(os.environ.get("MRFUSE_JOBS", "1")))
    _add_config_flags(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="soft-dice table for fused predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="per-recurrence soft-dice table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--max-tau", dest="max_tau", type=int, default=3)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="verify the posterior-fusion identity")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
