"""Analysis of a results file: metrics tables, baselines, distributions.

Everything here is a pure, deterministic function of the results file (plus
the dataset files its header names) — no backend is ever queried. The output
is a JSON document and a delimited table ready for plotting.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable

from .campaign import CampaignError, config_convention, read_results
from .config import CampaignConfig, canonical_json
from .distribution import (
    Quadrant,
    TokenDistribution,
    alternative_consideration_test,
    build_density_histogram,
    gaussian_smooth,
    group_logprobs_by_quadrant,
    kl_divergence_bits,
    shared_edges,
)
from .evaluation import (
    RunMetrics,
    aggregate_runs,
    expected_random_consistency,
    verbalization_scores,
)
from .funcspace import parse
from .mining import Dataset, continuations_of, load_dataset
from .prompting import Task

ANALYSIS_FILENAME = "analysis.json"
METRICS_FILENAME = "metrics.tsv"

#: Published reference points for the random-consistency baseline: mean
#: explanation/completion accuracy (percent) reported per model alongside the
#: expected consistency of a random valid answerer at that accuracy level.
REFERENCE_RANDOM_CONSISTENCY = (
    {"label": "reference-model-a", "p_expl": 31.18, "p_compl": 65.95, "reported": 8.50},
    {"label": "reference-model-b", "p_expl": 50.25, "p_compl": 77.56, "reported": 10.02},
    {"label": "reference-model-c", "p_expl": 59.05, "p_compl": 78.64, "reported": 15.22},
)

#: Reference KL values (bits) published for the two headline quadrant pairs;
#: context only — they came from a specific model's output distributions.
REFERENCE_KL_BITS = {
    "correct_predicted||correct_not_predicted": 1.71,
    "correct_predicted||incorrect_not_predicted": 3.45,
}

_KL_HEADLINE_PAIRS = (
    (Quadrant.CORRECT_PREDICTED, Quadrant.CORRECT_NOT_PREDICTED),
    (Quadrant.CORRECT_PREDICTED, Quadrant.INCORRECT_NOT_PREDICTED),
)


def _records_for(
    lines: Iterable[dict],
    length: int,
    run_id: int | None = None,
    task: Task | None = None,
    ambiguous: bool | None = None,
) -> list[dict]:
    out = []
    for line in lines:
        if line["length"] != length:
            continue
        if run_id is not None and line["run_id"] != run_id:
            continue
        if task is not None and line["task"] != task.value:
            continue
        if ambiguous is not None and line["ambiguous"] != ambiguous:
            continue
        out.append(line)
    return out


def _pct(outcomes: list[bool]) -> float | None:
    if not outcomes:
        return None
    return 100.0 * sum(outcomes) / len(outcomes)


def _accuracy_fields(lines: list[dict], run_id: int, length: int) -> dict[str, Any]:
    """Accuracy over unambiguous sequences; invalid answers score incorrect."""
    fields: dict[str, Any] = {}
    both: list[dict] = []
    for task, name in (
        (Task.EXPLANATION, "explanation_accuracy"),
        (Task.COMPLETION, "completion_accuracy"),
    ):
        records = _records_for(lines, length, run_id, task, ambiguous=False)
        both.extend(records)
        fields[name] = _pct([bool(r["correct"]) for r in records])
    fields["valid_fraction"] = _pct([r["valid"] for r in both])
    return fields


def _cross_context(lines: list[dict], run_id: int, length: int, convention) -> dict:
    """Execution-checked consistency of same-run completion/explanation pairs
    on ambiguous sequences."""
    completions = {
        tuple(r["sequence"]["values"]): r
        for r in _records_for(lines, length, run_id, Task.COMPLETION, ambiguous=True)
    }
    explanations = {
        tuple(r["sequence"]["values"]): r
        for r in _records_for(lines, length, run_id, Task.EXPLANATION, ambiguous=True)
    }
    consistent = inconsistent = invalid = 0
    for values in sorted(set(completions) & set(explanations)):
        compl, expl = completions[values], explanations[values]
        if not (compl["valid"] and expl["valid"]):
            invalid += 1
            continue
        fn = parse(expl["parsed"]["value"])
        if compl["parsed"]["value"] in continuations_of(fn, values, convention):
            consistent += 1
        else:
            inconsistent += 1
    evaluated = consistent + inconsistent
    return {
        "consistent": consistent,
        "inconsistent": inconsistent,
        "invalid": invalid,
        "rate": 100.0 * consistent / evaluated if evaluated else None,
    }


def _model_judged(lines: list[dict], run_id: int, length: int) -> dict:
    records = _records_for(
        lines, length, run_id, Task.CONSISTENCY_JUDGMENT, ambiguous=True
    )
    consistent = sum(1 for r in records if r["valid"] and r["parsed"]["value"])
    inconsistent = sum(1 for r in records if r["valid"] and not r["parsed"]["value"])
    invalid = sum(1 for r in records if not r["valid"])
    evaluated = consistent + inconsistent
    return {
        "consistent": consistent,
        "inconsistent": inconsistent,
        "invalid": invalid,
        "rate": 100.0 * consistent / evaluated if evaluated else None,
    }


def _verbalization(lines: list[dict], run_id: int, length: int) -> dict:
    precisions, recalls, invalid = [], [], 0
    for record in _records_for(
        lines, length, run_id, Task.VERBALIZE_ALTERNATIVES, ambiguous=True
    ):
        if not record["valid"]:
            invalid += 1
            continue
        precision, recall = verbalization_scores(
            record["parsed"]["value"], record["continuations"]
        )
        precisions.append(precision)
        recalls.append(recall)
    return {
        "precision": fmean(precisions) if precisions else None,
        "recall": fmean(recalls) if recalls else None,
        "scored": len(precisions),
        "invalid": invalid,
    }


def _alternative_test(lines: list[dict], run_id: int, length: int, base: int) -> dict:
    passed = failed = 0
    reasons: dict[str, int] = {}
    for record in _records_for(
        lines, length, run_id, Task.COMPLETION, ambiguous=True
    ):
        if not record["top_logprobs"]:
            continue
        dist = TokenDistribution.from_pairs(
            (t, lp) for t, lp in record["top_logprobs"]
        )
        result = alternative_consideration_test(dist, record["continuations"], base)
        passed += result.passed
        failed += not result.passed
        reasons[result.reason.value] = reasons.get(result.reason.value, 0) + 1
    total = passed + failed
    return {
        "passed": passed,
        "failed": failed,
        "reasons": dict(sorted(reasons.items())),
        "pass_rate": 100.0 * passed / total if total else None,
    }


def _quadrant_analysis(lines: list[dict], length: int, base: int) -> dict:
    """Pool completion-task logprob captures across runs, bucket by quadrant,
    and compare the smoothed per-quadrant densities."""
    groups: dict[Quadrant, list[float]] = {q: [] for q in Quadrant}
    for record in _records_for(lines, length, task=Task.COMPLETION):
        if not record["top_logprobs"]:
            continue
        dist = TokenDistribution.from_pairs(
            (t, lp) for t, lp in record["top_logprobs"]
        )
        for quadrant, values in group_logprobs_by_quadrant(
            dist, record["continuations"], base
        ).items():
            groups[quadrant].extend(values)

    counts = {q.value: len(groups[q]) for q in Quadrant}
    occupied = [g for g in groups.values() if g]
    kl: dict[str, float | None] = {
        f"{a.value}||{b.value}": None for a, b in _KL_HEADLINE_PAIRS
    }
    if len(occupied) >= 1:
        edges = shared_edges(occupied)
        smoothed = {
            q: gaussian_smooth(build_density_histogram(g, edges=edges))
            for q, g in groups.items()
            if g
        }
        for a, b in _KL_HEADLINE_PAIRS:
            if a in smoothed and b in smoothed:
                kl[f"{a.value}||{b.value}"] = kl_divergence_bits(
                    smoothed[a], smoothed[b]
                )
    return {"counts": counts, "kl_bits": kl}


def _random_baseline(dataset: Dataset, mc_samples: int, rng_seed: int) -> dict:
    ambiguous_only = Dataset(
        parameters=dataset.parameters, ambiguous=dataset.ambiguous, unambiguous=()
    )
    closed = expected_random_consistency(
        100, 100, ambiguous_only, mode="closed_form", which="ambiguous"
    )
    mc = expected_random_consistency(
        100,
        100,
        ambiguous_only,
        n_samples=mc_samples,
        rng_seed=rng_seed,
        which="ambiguous",
    )
    sigma_bound = 100 * 0.5 / math.sqrt(len(ambiguous_only.ambiguous) * mc_samples)
    return {
        "closed_form": closed,
        "monte_carlo": mc,
        "n_samples": mc_samples,
        "sigma_bound": sigma_bound,
    }


def _reference_comparison(
    datasets: dict[int, Dataset], mc_samples: int, rng_seed: int
) -> list[dict]:
    """Expected random consistency at the published accuracy points, averaged
    over the campaign's sequence lengths, with the gap to the published value."""
    rows = []
    for ref in REFERENCE_RANDOM_CONSISTENCY:
        per_length_closed = []
        per_length_mc = []
        for length in sorted(datasets):
            ambiguous_only = Dataset(
                parameters=datasets[length].parameters,
                ambiguous=datasets[length].ambiguous,
                unambiguous=(),
            )
            per_length_closed.append(
                expected_random_consistency(
                    ref["p_expl"],
                    ref["p_compl"],
                    ambiguous_only,
                    mode="closed_form",
                    which="ambiguous",
                )
            )
            per_length_mc.append(
                expected_random_consistency(
                    ref["p_expl"],
                    ref["p_compl"],
                    ambiguous_only,
                    n_samples=mc_samples,
                    rng_seed=rng_seed,
                    which="ambiguous",
                )
            )
        closed = fmean(per_length_closed)
        rows.append(
            {
                **ref,
                "computed_closed_form": closed,
                "computed_monte_carlo": fmean(per_length_mc),
                "gap": closed - ref["reported"],
                "lengths": sorted(datasets),
            }
        )
    return rows


def _run_metrics(per_run_fields: dict[str, Any]) -> RunMetrics:
    return RunMetrics(
        explanation_accuracy=per_run_fields["explanation_accuracy"],
        completion_accuracy=per_run_fields["completion_accuracy"],
        valid_fraction=per_run_fields["valid_fraction"],
        cross_context_consistency=per_run_fields["cross_context"]["rate"],
        model_judged_consistency=per_run_fields["model_judged"]["rate"],
        precision=per_run_fields["verbalization"]["precision"],
        recall=per_run_fields["verbalization"]["recall"],
    )


def analyze_results(
    results_file: str | Path, *, mc_samples: int = 2000
) -> dict[str, Any]:
    """Build the full analysis document for one results file."""
    results_file = Path(results_file)
    header, lines = read_results(results_file)
    config = CampaignConfig.from_json(header["config"])
    convention = config_convention(config)

    datasets: dict[int, Dataset] = {}
    for length_str, filename in header["datasets"].items():
        path = results_file.parent / filename
        if not path.exists():
            raise CampaignError(
                f"dataset file {path} named by the results header is missing"
            )
        datasets[int(length_str)] = load_dataset(path)

    per_length: dict[str, Any] = {}
    for length in config.lengths:
        run_ids = sorted({r["run_id"] for r in lines if r["length"] == length})
        per_run = []
        for run_id in run_ids:
            fields = _accuracy_fields(lines, run_id, length)
            fields["run_id"] = run_id
            fields["cross_context"] = _cross_context(lines, run_id, length, convention)
            fields["model_judged"] = _model_judged(lines, run_id, length)
            fields["verbalization"] = _verbalization(lines, run_id, length)
            fields["alternative_test"] = _alternative_test(
                lines, run_id, length, config.base
            )
            per_run.append(fields)
        aggregate = (
            aggregate_runs([_run_metrics(f) for f in per_run]) if per_run else None
        )
        pass_rates = [
            f["alternative_test"]["pass_rate"]
            for f in per_run
            if f["alternative_test"]["pass_rate"] is not None
        ]
        per_length[str(length)] = {
            "per_run": per_run,
            "aggregate": (
                {
                    "explanation_accuracy": aggregate.explanation_accuracy,
                    "completion_accuracy": aggregate.completion_accuracy,
                    "valid_fraction": aggregate.valid_fraction,
                    "cross_context_consistency": aggregate.cross_context_consistency,
                    "model_judged_consistency": aggregate.model_judged_consistency,
                    "precision": aggregate.precision,
                    "recall": aggregate.recall,
                    "alternative_test_pass_rate": (
                        fmean(pass_rates) if pass_rates else None
                    ),
                    "n_runs": aggregate.n_runs,
                }
                if aggregate
                else None
            ),
            "random_baseline": _random_baseline(
                datasets[length], mc_samples, config.rng_seed
            ),
            "quadrants": _quadrant_analysis(lines, length, config.base),
        }

    return {
        "config_digest": header["config_digest"],
        "backend": config.backend,
        "n_records": len(lines),
        "per_length": per_length,
        "reference_random_consistency": _reference_comparison(
            datasets, mc_samples, config.rng_seed
        ),
        "reference_kl_bits": dict(REFERENCE_KL_BITS),
    }


# ---------------------------------------------------------------------------
# file output


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def metrics_table(analysis: dict[str, Any]) -> str:
    """Per-run and aggregate metrics as a tab-separated table."""
    columns = (
        "length",
        "run",
        "explanation_accuracy",
        "completion_accuracy",
        "valid_fraction",
        "cross_context_consistency",
        "model_judged_consistency",
        "precision",
        "recall",
        "alternative_test_pass_rate",
    )
    rows = [f"# config_digest={analysis['config_digest']}", "\t".join(columns)]
    for length in sorted(analysis["per_length"], key=int):
        block = analysis["per_length"][length]
        for f in block["per_run"]:
            rows.append(
                "\t".join(
                    _cell(v)
                    for v in (
                        length,
                        f["run_id"],
                        f["explanation_accuracy"],
                        f["completion_accuracy"],
                        f["valid_fraction"],
                        f["cross_context"]["rate"],
                        f["model_judged"]["rate"],
                        f["verbalization"]["precision"],
                        f["verbalization"]["recall"],
                        f["alternative_test"]["pass_rate"],
                    )
                )
            )
        agg = block["aggregate"]
        if agg:
            rows.append(
                "\t".join(
                    _cell(v)
                    for v in (
                        length,
                        "mean",
                        agg["explanation_accuracy"],
                        agg["completion_accuracy"],
                        agg["valid_fraction"],
                        agg["cross_context_consistency"],
                        agg["model_judged_consistency"],
                        agg["precision"],
                        agg["recall"],
                        agg["alternative_test_pass_rate"],
                    )
                )
            )
    return "\n".join(rows) + "\n"


def write_analysis(
    analysis: dict[str, Any], out_dir: str | Path
) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    analysis_path = out_dir / ANALYSIS_FILENAME
    analysis_path.write_text(canonical_json(analysis) + "\n")
    table_path = out_dir / METRICS_FILENAME
    table_path.write_text(metrics_table(analysis))
    return analysis_path, table_path


def load_analysis(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())
