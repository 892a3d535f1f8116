"""Command-line entry point: mine | run | analyze | report.

A single JSON config file drives every stage; individual flags override
single fields. All artifacts land in the config's output directory and carry
the config digest so mixed-up files are detectable.
"""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

from .analysis import (
    ANALYSIS_FILENAME,
    REFERENCE_KL_BITS,
    analyze_results,
    load_analysis,
    write_analysis,
)
from .campaign import (
    CampaignError,
    config_space,
    dataset_filename,
    mine_datasets,
    results_path,
    run_campaign,
)
from .config import CampaignConfig, ConfigError
from .mining import load_dataset

REPORT_FILENAME = "report.txt"

#: Independently published counts for the default protocol (8 templates,
#: constants 0..4, offsets 0..4). The miner prints its own counts next to
#: these and flags any divergence rather than papering over it.
REFERENCE_FUNCTION_COUNT = 197
REFERENCE_SEQUENCE_COUNTS = {4: (57, 140)}
REFERENCE_AMBIGUOUS_ONLY = {2: 196, 3: 76}


def _comma_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def _comma_strs(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ambigseq",
        description=(
            "Mine ambiguous integer sequences from a lambda-template function "
            "space and evaluate model consistency on them."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--output-dir", help="artifact directory (overrides config)")
    common.add_argument(
        "--lengths", type=_comma_ints, help="sequence lengths, e.g. 2,3,4"
    )
    common.add_argument("--base", type=int, choices=(10, 2))
    common.add_argument(
        "--constant-range", type=_comma_ints, metavar="LO,HI",
        help="template constant range, e.g. 0,4",
    )
    common.add_argument("--n-runs", type=int)
    common.add_argument("--rng-seed", type=int)
    common.add_argument(
        "--backend",
        choices=("oracle", "adversarial", "random_valid", "scripted", "http"),
    )
    common.add_argument("--tie-break", choices=("min_value", "enumeration_order"))
    common.add_argument("--backend-seed", type=int)
    common.add_argument("--fixtures-file")
    common.add_argument("--cache-dir")
    common.add_argument("--http-base-url")
    common.add_argument("--http-model")
    common.add_argument(
        "--variant", choices=("plain", "random", "self_consistent", "most_likely")
    )
    common.add_argument("--n-shots", type=int)
    common.add_argument(
        "--shot-sampling", choices=("random", "same_class", "exclude_class")
    )
    common.add_argument("--model-name")
    common.add_argument("--tasks", type=_comma_strs, help="comma-separated task list")
    common.add_argument("--limit-sequences", type=int)
    common.add_argument("--want-top-logprobs", type=int)

    sub.add_parser("mine", parents=[common], help="mine datasets and report counts")
    sub.add_parser("run", parents=[common], help="run the evaluation campaign")
    sub.add_parser("analyze", parents=[common], help="compute metrics from results")
    sub.add_parser("report", parents=[common], help="render a readable report")
    return parser


_OVERRIDE_FIELDS = (
    "output_dir",
    "lengths",
    "base",
    "constant_range",
    "n_runs",
    "rng_seed",
    "backend",
    "tie_break",
    "backend_seed",
    "fixtures_file",
    "cache_dir",
    "http_base_url",
    "http_model",
    "variant",
    "n_shots",
    "shot_sampling",
    "model_name",
    "tasks",
    "limit_sequences",
    "want_top_logprobs",
)


def resolve_config(args: argparse.Namespace) -> CampaignConfig:
    config = (
        CampaignConfig.from_file(args.config) if args.config else CampaignConfig()
    )
    overrides = {
        name: getattr(args, name)
        for name in _OVERRIDE_FIELDS
        if getattr(args, name) is not None
    }
    return config.override(**overrides) if overrides else config


# ---------------------------------------------------------------------------
# subcommands


def _print_space_summary(config: CampaignConfig, out) -> None:
    space = config_space(config)
    n = len(space)
    verdict = (
        "matches" if n == REFERENCE_FUNCTION_COUNT
        else f"DIVERGES from reference {REFERENCE_FUNCTION_COUNT}"
    )
    print(f"function space: {n} valid functions ({verdict})", file=out)
    if space.excluded:
        print(
            "candidates excluded by the value-bound validity rule "
            f"(|f(x)| <= {space.max_value} error-free at x = "
            f"{space.probe_indices[0]}..{space.probe_indices[-1]}):",
            file=out,
        )
        for candidate in space.excluded:
            print(f"  - {candidate.function.text}: {candidate.reason}", file=out)


def _dataset_count_lines(length: int, counts) -> list[str]:
    lines = [
        f"length {length}: "
        f"{counts.sequences_ambiguous} ambiguous / "
        f"{counts.sequences_unambiguous} unambiguous sequences; "
        f"{counts.functions_ambiguous} ambiguous / "
        f"{counts.functions_unambiguous} unambiguous functions; "
        f"{counts.ambiguous_function_pairs} ambiguous function pairs; "
        f"{counts.self_ambiguous_functions} self-ambiguous functions"
    ]
    if length in REFERENCE_SEQUENCE_COUNTS:
        ref_amb, ref_unamb = REFERENCE_SEQUENCE_COUNTS[length]
        match = (
            counts.sequences_ambiguous == ref_amb
            and counts.sequences_unambiguous == ref_unamb
        )
        verdict = "matches" if match else "DIVERGES under every counting unit above"
        lines.append(
            f"  reference: {ref_amb} ambiguous / {ref_unamb} unambiguous "
            f"sequences — {verdict}"
        )
    if length in REFERENCE_AMBIGUOUS_ONLY:
        ref = REFERENCE_AMBIGUOUS_ONLY[length]
        units = {
            "sequences": counts.sequences_ambiguous,
            "functions": counts.functions_ambiguous,
            "function pairs": counts.ambiguous_function_pairs,
        }
        closest = min(units, key=lambda u: abs(units[u] - ref))
        lines.append(
            f"  reference: {ref} ambiguous (counting unit unstated) — observed "
            + ", ".join(f"{v} {u}" for u, v in units.items())
            + f"; closest unit: {closest}"
        )
    return lines


def cmd_mine(config: CampaignConfig, out=None) -> int:
    out = out or sys.stdout
    _print_space_summary(config, out)
    datasets = mine_datasets(config)
    space = config_space(config)
    for length in config.lengths:
        counts = datasets[length].counts(space)
        for line in _dataset_count_lines(length, counts):
            print(line, file=out)
        print(
            f"  wrote {Path(config.output_dir) / dataset_filename(length)}", file=out
        )
    return 0


def cmd_run(config: CampaignConfig, out=None) -> int:
    out = out or sys.stdout
    outcome = run_campaign(config)
    if outcome.failed:
        print(
            f"campaign {config.digest()} aborted after {outcome.queried} queries: "
            f"{outcome.error}",
            file=sys.stderr,
        )
        print(f"partial results preserved in {outcome.results_file}", file=sys.stderr)
        return 1
    print(
        f"campaign {config.digest()}: {outcome.queried} queried, "
        f"{outcome.skipped} already present",
        file=out,
    )
    print(f"results: {outcome.results_file}", file=out)
    return 0


def cmd_analyze(config: CampaignConfig, out=None) -> int:
    out = out or sys.stdout
    analysis = analyze_results(results_path(config.output_dir))
    analysis_path, table_path = write_analysis(analysis, config.output_dir)
    for length, block in sorted(analysis["per_length"].items(), key=lambda kv: int(kv[0])):
        agg = block["aggregate"]
        if not agg:
            continue
        parts = [f"length {length} (mean over {agg['n_runs']} runs):"]
        for label, key in (
            ("explanation acc", "explanation_accuracy"),
            ("completion acc", "completion_accuracy"),
            ("valid", "valid_fraction"),
            ("cross-context", "cross_context_consistency"),
            ("model-judged", "model_judged_consistency"),
        ):
            value = agg[key]
            if value is not None:
                parts.append(f"{label} {value:.2f}%")
        print(" ".join(parts), file=out)
    print(f"analysis: {analysis_path}", file=out)
    print(f"metrics table: {table_path}", file=out)
    return 0


def _report_text(config: CampaignConfig, analysis: dict) -> str:
    lines: list[str] = []
    push = lines.append
    push(f"campaign {analysis['config_digest']} — backend {analysis['backend']}")
    push("")

    push("== function space ==")
    buf = io.StringIO()
    _print_space_summary(config, buf)
    lines.extend(buf.getvalue().rstrip("\n").split("\n"))
    push("")

    push("== datasets ==")
    for length_str in sorted(analysis["per_length"], key=int):
        length = int(length_str)
        dataset = load_dataset(Path(config.output_dir) / dataset_filename(length))
        counts = dataset.counts(config_space(config))
        lines.extend(_dataset_count_lines(length, counts))
    push("")

    push("== metrics (mean over runs) ==")
    for length_str in sorted(analysis["per_length"], key=int):
        agg = analysis["per_length"][length_str]["aggregate"]
        if not agg:
            continue
        push(f"length {length_str} ({agg['n_runs']} runs):")
        for label, key, unit in (
            ("explanation accuracy", "explanation_accuracy", "%"),
            ("completion accuracy", "completion_accuracy", "%"),
            ("valid fraction", "valid_fraction", "%"),
            ("cross-context consistency", "cross_context_consistency", "%"),
            ("model-judged consistency", "model_judged_consistency", "%"),
            ("verbalization precision", "precision", ""),
            ("verbalization recall", "recall", ""),
            ("alternative-consideration pass rate", "alternative_test_pass_rate", "%"),
        ):
            value = agg[key]
            if value is not None:
                push(f"  {label}: {value:.2f}{unit}")
    push("")

    push("== random-consistency baseline (ambiguous sequences, full validity) ==")
    for length_str in sorted(analysis["per_length"], key=int):
        baseline = analysis["per_length"][length_str]["random_baseline"]
        push(
            f"length {length_str}: closed form {baseline['closed_form']:.2f}%, "
            f"Monte Carlo {baseline['monte_carlo']:.2f}% "
            f"({baseline['n_samples']} samples, sigma bound "
            f"{baseline['sigma_bound']:.3f})"
        )
    push("")
    push("reference points (expected consistency at published accuracy levels):")
    for row in analysis["reference_random_consistency"]:
        push(
            f"  ({row['p_expl']:.2f}% expl, {row['p_compl']:.2f}% compl): "
            f"reported {row['reported']:.2f}%, computed "
            f"{row['computed_closed_form']:.2f}% closed form / "
            f"{row['computed_monte_carlo']:.2f}% Monte Carlo "
            f"over lengths {row['lengths']} — gap "
            f"{row['gap']:+.2f} points"
        )
    push(
        "  (the reference derivation is unpublished; the gap is reported, "
        "not reconciled)"
    )
    push("")

    push("== output-distribution quadrants ==")
    for length_str in sorted(analysis["per_length"], key=int):
        quadrants = analysis["per_length"][length_str]["quadrants"]
        counts = ", ".join(f"{k} {v}" for k, v in sorted(quadrants["counts"].items()))
        push(f"length {length_str}: {counts}")
        for pair, value in sorted(quadrants["kl_bits"].items()):
            reference = REFERENCE_KL_BITS.get(pair)
            shown = "n/a (a group is empty)" if value is None else f"{value:.2f} bits"
            push(f"  KL {pair}: {shown} (reference {reference:.2f} bits)")
    return "\n".join(lines) + "\n"


def cmd_report(config: CampaignConfig, out=None) -> int:
    out = out or sys.stdout
    analysis_path = Path(config.output_dir) / ANALYSIS_FILENAME
    if analysis_path.exists():
        analysis = load_analysis(analysis_path)
    else:
        analysis = analyze_results(results_path(config.output_dir))
    text = _report_text(config, analysis)
    report_file = Path(config.output_dir) / REPORT_FILENAME
    report_file.write_text(text)
    print(text, end="", file=out)
    print(f"(written to {report_file})", file=out)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    handler = {
        "mine": cmd_mine,
        "run": cmd_run,
        "analyze": cmd_analyze,
        "report": cmd_report,
    }[args.command]
    try:
        return handler(config)
    except (CampaignError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
