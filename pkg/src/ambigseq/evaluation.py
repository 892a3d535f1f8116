"""Response parsing and scoring.

Turns raw model text into typed answers, scores accuracy against unambiguous
sequences, and computes the three consistency measures: cross-context
(execution-based), model-judged, and the expected value under a random-but-
valid answering policy.

Conventions: accuracy, validity, and consistency figures are percentages in
[0, 100]; verbalization precision/recall are fractions in [0, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from random import Random
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from .distribution import parse_numeral_token
from .funcspace import (
    ConcreteFunction,
    DEFAULT_CONVENTION,
    FunctionLike,
    FunctionSpace,
    IndexConvention,
    ParseError,
    ParsedFunction,
    parse,
    render_function,
)
from .mining import (
    AmbiguityRecord,
    Dataset,
    SequenceRecord,
    continuations_of,
)
from .prompting import (
    MAX_VERBALIZED_ALTERNATIVES,
    PromptSpec,
    Task,
    Variant,
    build_prompt,
)

AFFIRMATIVE_VERDICT = "consistent"
NEGATIVE_VERDICT = "inconsistent"

# ---------------------------------------------------------------------------
# response parsing


def parse_completion_response(text: str, base: int = 10) -> int | None:
    """Parse a bare numeral answer; anything with commentary is invalid."""
    return parse_numeral_token(text, base)


def parse_explanation_response(text: str) -> FunctionLike | None:
    """Parse a function answer, with or without the ``Explanation:`` marker."""
    body = text.strip()
    if body.lower().startswith("explanation:"):
        body = body[len("explanation:"):].strip()
    try:
        return parse(body)
    except ParseError:
        return None


def parse_judgment_response(
    text: str,
    affirmative: str = AFFIRMATIVE_VERDICT,
    negative: str = NEGATIVE_VERDICT,
) -> bool | None:
    """Map a verdict response to True/False; None when no verdict leads.

    The judgment instruction demands a single verdict word, so only the first
    word token counts — a hedged sentence is treated as unparseable rather
    than guessed at. The verdict vocabulary is configurable for backends
    that answer with e.g. yes/no.
    """
    tokens = re.findall(r"[a-zA-Z]+", text.lower())
    if not tokens:
        return None
    if tokens[0] == negative.lower():
        return False
    if tokens[0] == affirmative.lower():
        return True
    return None


def parse_verbalized_response(text: str, base: int = 10) -> tuple[int, ...] | None:
    """Parse a list of alternatives separated by '\\n' escapes or newlines.

    Every non-empty segment must be a numeral, otherwise the whole response
    is invalid. An empty response parses as an empty tuple (no alternatives
    offered) — that is a valid, scoreable answer.
    """
    segments = re.split(r"\\n|\n", text)
    out: list[int] = []
    for segment in segments:
        if not segment.strip():
            continue
        value = parse_numeral_token(segment, base)
        if value is None:
            return None
        out.append(value)
    return tuple(out)


def parse_response(task: Task, text: str, base: int = 10):
    """Dispatch to the task-appropriate parser; None means invalid."""
    if task is Task.COMPLETION:
        return parse_completion_response(text, base)
    if task is Task.EXPLANATION:
        return parse_explanation_response(text)
    if task is Task.CONSISTENCY_JUDGMENT:
        return parse_judgment_response(text)
    if task is Task.VERBALIZE_ALTERNATIVES:
        return parse_verbalized_response(text, base)
    raise ValueError(f"no parser for task {task!r}")


# ---------------------------------------------------------------------------
# records and metrics


@dataclass(frozen=True)
class EvalRecord:
    """One scored response to one task query."""

    sequence: SequenceRecord
    task: Task
    raw_response: str
    parsed: int | FunctionLike | bool | tuple[int, ...] | None
    valid: bool
    correct: bool | None = None
    run_id: int = 0

    def __post_init__(self) -> None:
        if self.valid == (self.parsed is None):
            raise ValueError("valid must mean exactly: parsed is present")
        if not self.valid and self.correct is not None:
            raise ValueError("an invalid record cannot be scored correct/incorrect")
        if self.parsed is not None:
            self._check_parsed_type()

    def _check_parsed_type(self) -> None:
        p = self.parsed
        ok = {
            Task.COMPLETION: lambda: isinstance(p, int) and not isinstance(p, bool),
            Task.EXPLANATION: lambda: isinstance(p, (ConcreteFunction, ParsedFunction)),
            Task.CONSISTENCY_JUDGMENT: lambda: isinstance(p, bool),
            Task.VERBALIZE_ALTERNATIVES: lambda: isinstance(p, tuple)
            and all(isinstance(v, int) and not isinstance(v, bool) for v in p),
        }[self.task]()
        if not ok:
            raise ValueError(f"parsed value {p!r} does not fit task {self.task.value}")


def build_eval_record(
    task: Task,
    sequence: SequenceRecord,
    raw_response: str,
    run_id: int = 0,
) -> EvalRecord:
    parsed = parse_response(task, raw_response, sequence.base)
    return EvalRecord(
        sequence=sequence,
        task=task,
        raw_response=raw_response,
        parsed=parsed,
        valid=parsed is not None,
        run_id=run_id,
    )


def eval_record_to_json(record: EvalRecord) -> dict:
    p = record.parsed
    if p is None:
        parsed = {"kind": "invalid"}
    elif record.task is Task.CONSISTENCY_JUDGMENT:
        parsed = {"kind": "bool", "value": p}
    elif record.task is Task.EXPLANATION:
        parsed = {"kind": "function", "value": render_function(p, 10)}
    elif record.task is Task.VERBALIZE_ALTERNATIVES:
        parsed = {"kind": "ints", "value": list(p)}
    else:
        parsed = {"kind": "int", "value": p}
    return {
        "sequence": {"values": list(record.sequence.values), "base": record.sequence.base},
        "task": record.task.value,
        "raw_response": record.raw_response,
        "parsed": parsed,
        "valid": record.valid,
        "correct": record.correct,
        "run_id": record.run_id,
    }


def eval_record_from_json(data: Mapping) -> EvalRecord:
    parsed_field = data["parsed"]
    kind = parsed_field["kind"]
    if kind == "invalid":
        parsed = None
    elif kind == "function":
        parsed = parse(parsed_field["value"])
    elif kind == "ints":
        parsed = tuple(int(v) for v in parsed_field["value"])
    elif kind == "bool":
        parsed = bool(parsed_field["value"])
    else:
        parsed = int(parsed_field["value"])
    return EvalRecord(
        sequence=SequenceRecord(
            tuple(data["sequence"]["values"]), data["sequence"]["base"]
        ),
        task=Task(data["task"]),
        raw_response=data["raw_response"],
        parsed=parsed,
        valid=data["valid"],
        correct=data["correct"],
        run_id=data["run_id"],
    )


_PERCENT_FIELDS = (
    "explanation_accuracy",
    "completion_accuracy",
    "valid_fraction",
    "cross_context_consistency",
    "model_judged_consistency",
)
_FRACTION_FIELDS = ("precision", "recall")


@dataclass(frozen=True)
class RunMetrics:
    """Headline numbers for one run (or a mean over several)."""

    explanation_accuracy: float | None = None
    completion_accuracy: float | None = None
    valid_fraction: float | None = None
    cross_context_consistency: float | None = None
    model_judged_consistency: float | None = None
    precision: float | None = None
    recall: float | None = None
    n_runs: int = 1

    def __post_init__(self) -> None:
        for name in _PERCENT_FIELDS:
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 100.0:
                raise ValueError(f"{name}={value} outside [0, 100]")
        for name in _FRACTION_FIELDS:
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")


# ---------------------------------------------------------------------------
# accuracy


def annotate_correctness(
    records: Iterable[EvalRecord], dataset: Dataset
) -> tuple[EvalRecord, ...]:
    """Fill in ``correct`` for completion/explanation records on unambiguous
    sequences; other records pass through untouched."""
    out = []
    for record in records:
        ds_record = dataset.find(record.sequence.values)
        if (
            record.task in (Task.COMPLETION, Task.EXPLANATION)
            and record.valid
            and ds_record is not None
            and not ds_record.is_ambiguous
        ):
            out.append(replace(record, correct=_is_correct(record, ds_record)))
        else:
            out.append(record)
    return tuple(out)


def _is_correct(record: EvalRecord, ds_record: AmbiguityRecord) -> bool:
    if record.task is Task.COMPLETION:
        (answer,) = ds_record.continuations
        return record.parsed == answer
    # exact template-form match: equality holds iff the canonical texts match
    return record.parsed in ds_record.functions


def score_accuracy(records: Iterable[EvalRecord], dataset: Dataset) -> RunMetrics:
    """Accuracy and valid-fraction over completion/explanation records.

    Every record must target an unambiguous sequence of the dataset —
    accuracy is only well-defined where there is a single right answer.
    """
    scorable = [r for r in records if r.task in (Task.COMPLETION, Task.EXPLANATION)]
    if not scorable:
        raise ValueError("no completion or explanation records to score")
    by_task: dict[Task, list[bool]] = {Task.COMPLETION: [], Task.EXPLANATION: []}
    n_valid = 0
    for record in scorable:
        ds_record = dataset.find(record.sequence.values)
        if ds_record is None or ds_record.is_ambiguous:
            raise ValueError(
                f"sequence {record.sequence.values} is not an unambiguous "
                "sequence of this dataset"
            )
        if record.valid:
            n_valid += 1
            by_task[record.task].append(_is_correct(record, ds_record))
        else:
            by_task[record.task].append(False)

    def pct(outcomes: list[bool]) -> float | None:
        if not outcomes:
            return None
        return 100.0 * sum(outcomes) / len(outcomes)

    return RunMetrics(
        explanation_accuracy=pct(by_task[Task.EXPLANATION]),
        completion_accuracy=pct(by_task[Task.COMPLETION]),
        valid_fraction=100.0 * n_valid / len(scorable),
    )


# ---------------------------------------------------------------------------
# cross-context consistency


def check_cross_context_consistency(
    sequence: SequenceRecord | Sequence[int],
    completion: int,
    explanation: FunctionLike,
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> bool:
    """True iff the explanation generates the sequence *and* the completion.

    Pure execution — no model involved: some offset of the explanation must
    reproduce the observed values followed by the claimed next value.
    """
    values = (
        sequence.values if isinstance(sequence, SequenceRecord) else tuple(sequence)
    )
    return completion in continuations_of(explanation, values, convention)


@dataclass(frozen=True)
class ConsistencySummary:
    """Consistent / inconsistent / invalid bucket counts for one run."""

    consistent: int
    inconsistent: int
    invalid: int

    @property
    def evaluated(self) -> int:
        return self.consistent + self.inconsistent

    @property
    def total(self) -> int:
        return self.evaluated + self.invalid

    @property
    def rate(self) -> float | None:
        """Percent consistent among pairs where both answers parsed."""
        if not self.evaluated:
            return None
        return 100.0 * self.consistent / self.evaluated


def score_cross_context(
    records: Iterable[EvalRecord],
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> ConsistencySummary:
    """Pair completion/explanation records by (run, sequence) and bucket them.

    A pair with either answer unparseable lands in the invalid bucket and is
    excluded from the rate's denominator.
    """
    pairs: dict[tuple, dict[Task, list[EvalRecord]]] = {}
    for record in records:
        if record.task not in (Task.COMPLETION, Task.EXPLANATION):
            continue
        key = (record.run_id, record.sequence.values, record.sequence.base)
        pairs.setdefault(key, {Task.COMPLETION: [], Task.EXPLANATION: []})[
            record.task
        ].append(record)

    consistent = inconsistent = invalid = 0
    for key in sorted(pairs):
        group = pairs[key]
        for compl, expl in zip(group[Task.COMPLETION], group[Task.EXPLANATION]):
            if not (compl.valid and expl.valid):
                invalid += 1
            elif check_cross_context_consistency(
                compl.sequence, compl.parsed, expl.parsed, convention
            ):
                consistent += 1
            else:
                inconsistent += 1
    return ConsistencySummary(consistent, inconsistent, invalid)


# ---------------------------------------------------------------------------
# model-judged consistency


def model_judged_consistency(
    backend,
    sequence: SequenceRecord,
    completion: int,
    explanation: FunctionLike,
    space: FunctionSpace,
    *,
    convention: IndexConvention = DEFAULT_CONVENTION,
    dataset: Dataset | None = None,
    n_shots: int | None = None,
    rng_seed: int = 0,
    variant: Variant = Variant.PLAIN,
    affirmative: str = AFFIRMATIVE_VERDICT,
    negative: str = NEGATIVE_VERDICT,
) -> bool | None:
    """Ask a backend whether (explanation, completion) go together.

    Returns the parsed verdict, or None when the response has no leading
    verdict token.
    """
    from .backends import CompletionRequest

    spec = PromptSpec(
        task=Task.CONSISTENCY_JUDGMENT,
        variant=variant,
        base=sequence.base,
        n_shots=n_shots,
        rng_seed=rng_seed,
    )
    prompt = build_prompt(
        spec,
        sequence,
        space,
        convention=convention,
        dataset=dataset,
        judged_explanation=render_function(explanation, sequence.base),
        judged_completion=completion,
    )
    response = backend.complete(CompletionRequest(prompt))
    return parse_judgment_response(response.text, affirmative, negative)


def summarize_judgments(verdicts: Iterable[bool | None]) -> ConsistencySummary:
    verdicts = list(verdicts)
    return ConsistencySummary(
        consistent=sum(v is True for v in verdicts),
        inconsistent=sum(v is False for v in verdicts),
        invalid=sum(v is None for v in verdicts),
    )


# ---------------------------------------------------------------------------
# expected consistency of a random-but-valid answerer


def _record_pools(record: AmbiguityRecord):
    functions = record.functions
    continuations = sorted(record.continuations)
    cont_by_fn = {
        fn: frozenset(
            g.continuation for g in record.generators if g.function == fn
        )
        for fn in functions
    }
    return functions, continuations, cont_by_fn


def _per_record_expectation(record: AmbiguityRecord) -> float:
    """P(completion ∈ cont(explanation)) for uniform valid answers."""
    functions, continuations, cont_by_fn = _record_pools(record)
    return fmean(len(cont_by_fn[fn]) / len(continuations) for fn in functions)


def expected_random_consistency(
    p_expl: float,
    p_compl: float,
    dataset: Dataset,
    *,
    mode: str = "monte_carlo",
    n_samples: int = 1000,
    rng_seed: int = 0,
    which: str = "all",
) -> float:
    """Consistency (percent) expected from answers sampled at given validity.

    With probability ``p_expl`` (percent) the explanation is a uniform draw
    over the sequence's generating functions, otherwise a non-generating one;
    likewise ``p_compl`` for the completion over valid continuations versus a
    wrong value. A wrong explanation cannot generate the sequence and a wrong
    completion lies outside every generator's continuation set, so both wrong
    branches score inconsistent by construction; the Monte Carlo sampler
    scores them as such without materializing the wrong draw. ``closed_form``
    computes the exact expectation

        (p_expl/100) * (p_compl/100) * mean_seq mean_fn |cont(fn)| / |C|

    for cross-validation against the sampled estimate.
    """
    if not 0.0 <= p_expl <= 100.0 or not 0.0 <= p_compl <= 100.0:
        raise ValueError("probabilities are percentages in [0, 100]")
    records = {
        "all": dataset.records(),
        "ambiguous": dataset.ambiguous,
        "unambiguous": dataset.unambiguous,
    }.get(which)
    if records is None:
        raise ValueError(f"unknown record selection {which!r}")
    if not records:
        raise ValueError("no records to estimate over")

    if mode == "closed_form":
        base = fmean(_per_record_expectation(r) for r in records)
        return (p_expl / 100.0) * (p_compl / 100.0) * base * 100.0
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")

    rng = Random(rng_seed)
    per_record_rates = []
    for record in records:
        functions, continuations, cont_by_fn = _record_pools(record)
        hits = 0
        for _ in range(n_samples):
            expl_ok = rng.random() < p_expl / 100.0
            compl_ok = rng.random() < p_compl / 100.0
            if not (expl_ok and compl_ok):
                continue
            fn = rng.choice(functions)
            value = rng.choice(continuations)
            hits += value in cont_by_fn[fn]
        per_record_rates.append(hits / n_samples)
    return 100.0 * fmean(per_record_rates)


# ---------------------------------------------------------------------------
# verbalized alternatives


def verbalization_scores(
    answers: Iterable[int],
    valid_set: Iterable[int],
) -> tuple[float, float]:
    """(precision, recall) of verbalized alternatives against the valid set.

    Duplicates collapse before scoring and at most five distinct alternatives
    count. An empty answer list scores (0, 0).
    """
    valid = frozenset(valid_set)
    if not valid:
        raise ValueError("the valid set cannot be empty")
    kept: list[int] = []
    for value in answers:
        if value not in kept:
            kept.append(value)
    kept = kept[:MAX_VERBALIZED_ALTERNATIVES]
    if not kept:
        return 0.0, 0.0
    overlap = len(valid.intersection(kept))
    return overlap / len(kept), overlap / len(valid)


# ---------------------------------------------------------------------------
# aggregation


def aggregate_runs(per_run: Sequence[RunMetrics]) -> RunMetrics:
    """Field-wise mean across runs; fields absent everywhere stay absent."""
    if not per_run:
        raise ValueError("need at least one run to aggregate")

    def mean_of(name: str) -> float | None:
        values = [v for m in per_run if (v := getattr(m, name)) is not None]
        return fmean(values) if values else None

    return RunMetrics(
        **{name: mean_of(name) for name in _PERCENT_FIELDS + _FRACTION_FIELDS},
        n_runs=sum(m.n_runs for m in per_run),
    )
