"""Command-line pipeline: generate, select, evaluate, abtest, audit.

Stages hand off through files. Every command is a pure function of its
inputs, flags, and seed; each run writes a manifest recording the input
digest, the seed, and the digests of every output, so reruns can be
checked byte-for-byte. Exit codes: 0 success, 1 usage, 2 data error,
3 capacity exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .abtest import run_abtest
from .dataset import TokenCatalog, load_dataset, save_dataset
from .errors import CapacityError, DataError, ParameterError
from .evaluation import SplitPlan, evaluate_subsets, report_to_json_text
from .infotheory import audit_monotonicity, audit_submodularity
from .selection import (
    STRATEGIES,
    select_auc_greedy,
    select_exhaustive,
    select_random,
    select_rits,
    select_rits_lazy,
)
from .synthgen import (
    apply_presentation,
    demo_experiment_config,
    experiment_from_config,
    generate_truth,
    load_experiment_config,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this pipeline reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._usage_exit(message))

    def _usage_exit(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return 1


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path: Path) -> str:
    return _sha256_bytes(path.read_bytes())


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _write_manifest(
    manifest_path: Path,
    command: str,
    input_paths: list[Path],
    flags: dict,
    master_seed,
    outputs: list[Path],
) -> None:
    digest = hashlib.sha256()
    for p in input_paths:
        digest.update(p.read_bytes())
    digest.update(json.dumps(flags, sort_keys=True).encode())
    manifest = {
        "command": command,
        "config_digest": digest.hexdigest(),
        "master_seed": master_seed,
        "tool_version": __version__,
        "outputs": [
            {"path": out.name, "sha256": _sha256_file(out)} for out in sorted(outputs)
        ],
    }
    _write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_input(path: str, fmt: str, catalog_path):
    p = Path(path)
    if not p.exists():
        raise DataError(f"input file not found: {p}")
    catalog = TokenCatalog.from_csv(catalog_path) if catalog_path else None
    if fmt == "auto":
        fmt = "jsonl" if p.suffix == ".jsonl" else "csv"
    return load_dataset(p, format=fmt, catalog=catalog)


# -- commands -----------------------------------------------------------


def cmd_generate(args) -> int:
    if args.config == "demo":
        cfg_obj = demo_experiment_config()
        gen, arms, arm_seeds = experiment_from_config(cfg_obj)
        input_paths = []
        flags = {"config": "demo", "format": args.format}
    else:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise DataError(f"config file not found: {cfg_path}")
        gen, arms, arm_seeds = load_experiment_config(cfg_path)
        input_paths = [cfg_path]
        flags = {"config": cfg_path.name, "format": args.format}

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth = generate_truth(gen)
    ext = "jsonl" if args.format == "jsonl" else "csv"

    outputs = []
    if arms:
        for arm, pres in arms.items():
            observed = apply_presentation(truth, pres, arm, arm_seeds[arm])
            path = out_dir / f"{arm}.{ext}"
            save_dataset(observed, path, format=args.format)
            outputs.append(path)
            print(f"wrote {path} ({len(observed)} records)")
    else:
        path = out_dir / f"truth.{ext}"
        save_dataset(truth, path, format=args.format)
        outputs.append(path)
        print(f"wrote {path} ({len(truth)} records)")

    _write_manifest(out_dir / "manifest.json", "generate", input_paths, flags, gen.seed, outputs)
    return 0


def cmd_select(args) -> int:
    dataset = _load_input(args.input, args.format, args.catalog)
    strategy = args.strategy
    if strategy in ("random", "auc_greedy") and args.seed is None:
        raise ParameterError(f"strategy {strategy} requires --seed for reproducibility")

    if strategy == "rits":
        trace = select_rits(dataset, args.k)
    elif strategy == "rits_lazy":
        trace = select_rits_lazy(dataset, args.k)
    elif strategy == "auc_greedy":
        trace = select_auc_greedy(
            dataset, args.k, splits=args.splits, seed=args.seed, train_fraction=args.train_frac
        )
    elif strategy == "random":
        trace = select_random(len(dataset.catalog), args.k, args.seed)
    else:
        trace = select_exhaustive(dataset, args.k)

    labels = dataset.catalog.labels
    unit = {"bits": "gain(bits)", "auc": "univ. AUC", "none": "gain"}[trace.gain_metric]
    print(f"strategy={trace.strategy} k={trace.budget_k}")
    print(f"{'step':>4}  {'token':>5}  {unit:>12}  {'cum. IG(bits)':>13}  label")
    for i, step in enumerate(trace.steps, start=1):
        print(
            f"{i:>4}  {step.token_id:>5}  {step.marginal_gain_bits:>12.6f}  "
            f"{step.cumulative_ig_bits:>13.6f}  {labels[step.token_id]}"
        )

    if args.output:
        out = Path(args.output)
        _write_text(out, json.dumps(trace.to_json(dataset.catalog), indent=2) + "\n")
        flags = {
            "input": Path(args.input).name,
            "k": args.k,
            "strategy": strategy,
            "splits": args.splits,
            "train_frac": args.train_frac,
        }
        _write_manifest(
            Path(str(out) + ".manifest.json"), "select", [Path(args.input)], flags, args.seed, [out]
        )
    return 0


def cmd_evaluate(args) -> int:
    dataset = _load_input(args.input, args.format, args.catalog)
    n_tokens = len(dataset.catalog)
    if args.k_max > n_tokens:
        raise ParameterError(f"--k-max {args.k_max} exceeds catalog size {n_tokens}")
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise ParameterError(f"unknown strategy {s!r} (choose from {', '.join(STRATEGIES)})")

    traces = []
    for s in strategies:
        if s == "rits":
            traces.append(select_rits(dataset, args.k_max))
        elif s == "rits_lazy":
            traces.append(select_rits_lazy(dataset, args.k_max))
        elif s == "auc_greedy":
            traces.append(
                select_auc_greedy(
                    dataset, args.k_max, splits=args.splits, seed=args.seed,
                    train_fraction=args.train_frac,
                )
            )
        elif s == "random":
            traces.append(select_random(n_tokens, args.k_max, args.seed))
        else:
            traces.append(select_exhaustive(dataset, args.k_max))

    plan = SplitPlan(splits=args.splits, train_fraction=args.train_frac, master_seed=args.seed)
    reports = evaluate_subsets(
        dataset, traces, plan, scorer_kind=args.scorer, trees=args.trees
    )

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for report in reports:
        json_path = out_dir / f"{report.strategy}_report.json"
        csv_path = out_dir / f"{report.strategy}_report.csv"
        _write_text(json_path, report_to_json_text(report))
        _write_text(csv_path, report.to_csv_text())
        outputs.extend([json_path, csv_path])

    for trace in traces:
        if trace.strategy in ("rits", "rits_lazy"):
            full = select_rits(dataset, n_tokens) if trace.budget_k < n_tokens else trace
            total = full.steps[-1].cumulative_ig_bits
            if total > 0:
                for threshold in (0.90, 0.94):
                    hit = next(
                        (
                            i + 1
                            for i, s in enumerate(full.steps)
                            if s.cumulative_ig_bits >= threshold * total
                        ),
                        None,
                    )
                    print(
                        f"{trace.strategy}: reaches {threshold:.0%} of full-set IG at k={hit}"
                    )
            break

    flags = {
        "input": Path(args.input).name,
        "strategies": strategies,
        "k_max": args.k_max,
        "splits": args.splits,
        "train_frac": args.train_frac,
        "scorer": args.scorer,
        "trees": args.trees,
    }
    _write_manifest(out_dir / "manifest.json", "evaluate", [Path(args.input)], flags, args.seed, outputs)
    print(f"wrote {len(outputs)} report files to {out_dir}")
    return 0


def cmd_abtest(args) -> int:
    control = _load_input(args.control, args.format, args.catalog)
    treatment = _load_input(args.treatment, args.format, args.catalog)
    report = run_abtest(
        control, treatment, denominator=args.denominator, significance_level=args.alpha
    )

    ov = report.overall
    delta = "n/a" if ov.relative_delta is None else f"{ov.relative_delta:+.4f}"
    print(f"overall response rate delta: {delta} (p={ov.p_value:.3g})")
    n_sig = len(report.significant_tokens())
    print(f"{n_sig} of {len(report.per_token)} tokens significant at {report.significance_level}")
    for t in report.per_token:
        cmp = t.comparison
        mark = "*" if cmp.p_value < report.significance_level else " "
        d = "  n/a  " if cmp.relative_delta is None else f"{cmp.relative_delta:+.4f}"
        print(f"  {mark} {d}  p={cmp.p_value:<10.3g} {t.label}")

    outputs = []
    if args.output:
        out = Path(args.output)
        _write_text(out, report.to_json_text())
        outputs.append(out)
    if args.csv:
        csv_path = Path(args.csv)
        _write_text(csv_path, report.to_csv_text())
        outputs.append(csv_path)
    if outputs:
        flags = {"denominator": args.denominator, "alpha": args.alpha}
        _write_manifest(
            Path(str(outputs[0]) + ".manifest.json"),
            "abtest",
            [Path(args.control), Path(args.treatment)],
            flags,
            None,
            outputs,
        )
    return 0


def cmd_audit(args) -> int:
    dataset = _load_input(args.input, args.format, args.catalog)
    mono = audit_monotonicity(dataset, args.trials, seed=args.seed)
    sub = audit_submodularity(dataset, args.trials, seed=args.seed, tolerance=args.tolerance)
    print(
        f"monotonicity: {mono.violations}/{mono.trials} violations"
        f" (max {mono.max_violation:.3e})"
    )
    print(
        f"submodularity: {sub.violations}/{sub.trials} violations beyond {sub.tolerance:g}"
        f" (max {sub.max_violation:.3e}, fraction {sub.violation_fraction:.4f})"
    )
    if args.output:
        out = Path(args.output)
        payload = {"monotonicity": mono.to_json(), "submodularity": sub.to_json()}
        _write_text(out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        flags = {"trials": args.trials, "tolerance": args.tolerance}
        _write_manifest(
            Path(str(out) + ".manifest.json"), "audit", [Path(args.input)], flags, args.seed, [out]
        )
    return 0


# -- argument wiring ------------------------------------------------------


def _add_io_flags(p: _Parser) -> None:
    p.add_argument("--format", choices=["auto", "csv", "jsonl"], default="auto")
    p.add_argument("--catalog", help="catalog CSV (id,label,panel) for custom token files")


def build_parser() -> _Parser:
    parser = _Parser(prog="toksel", description=__doc__)
    parser.add_argument("--version", action="version", version=f"toksel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="generate synthetic survey datasets from a config")
    p.add_argument("--config", required=True, help="experiment config JSON, or 'demo'")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("select", help="select a token subset from a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--strategy", choices=list(STRATEGIES), default="rits")
    p.add_argument("--seed", type=int)
    p.add_argument("--splits", type=int, default=100)
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--output", help="trace JSON path")
    _add_io_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="score strategies with repeated-split AUC and Jaccard")
    p.add_argument("--input", required=True)
    p.add_argument("--strategies", default="rits,auc_greedy,random")
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--splits", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--scorer", choices=["table", "forest"], default="table")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--output", required=True, help="report directory")
    _add_io_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("abtest", help="compare response rates between two arms")
    p.add_argument("--control", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--output", help="report JSON path")
    p.add_argument("--csv", help="per-token CSV path")
    p.add_argument("--denominator", choices=["displays", "responders"], default="displays")
    p.add_argument("--alpha", type=float, default=0.01)
    _add_io_flags(p)
    p.set_defaults(func=cmd_abtest)

    p = sub.add_parser("audit", help="audit monotonicity and diminishing returns")
    p.add_argument("--input", required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--output", help="audit report JSON path")
    _add_io_flags(p)
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except ParameterError as exc:
        print(f"toksel: error: {exc}", file=sys.stderr)
        return 1
    except CapacityError as exc:
        print(f"toksel: capacity error: {exc}", file=sys.stderr)
        return 3
    except (DataError, FileNotFoundError) as exc:
        print(f"toksel: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
