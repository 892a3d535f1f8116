"""Campaign execution: drive one backend over mined datasets, write results.

The results file is line-oriented JSON: a header (format, schema version,
config, config digest, dataset filenames) followed by one record per backend
query. Record lines carry no wall-clock data, so a repeat run with the same
config and a deterministic backend reproduces the file byte for byte;
timestamps go to a sidecar ``audit.log``. Reruns resume: records already
present are skipped, a truncated trailing line from an interrupted run is
dropped, and the remainder is appended in the same canonical order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, TextIO

from .backends import (
    Backend,
    BackendError,
    CachingBackend,
    CompletionRequest,
    HttpBackend,
    LogprobsUnsupportedError,
    OracleBackend,
    RandomValidBackend,
    ScriptedBackend,
    ScriptedResponse,
)
from .config import CampaignConfig, canonical_json
from .evaluation import annotate_correctness, build_eval_record
from .funcspace import FunctionSpace, enumerate_space, render_function
from .mining import AmbiguityRecord, Dataset, load_dataset
from .prompting import PromptSpec, Task, build_prompt

RESULTS_FORMAT = "ambigseq.results"
RESULTS_VERSION = 1
RESULTS_FILENAME = "results.jsonl"
AUDIT_FILENAME = "audit.log"


class CampaignError(RuntimeError):
    pass


def dataset_filename(length: int) -> str:
    return f"dataset_L{length}.jsonl"


def results_path(output_dir: str | Path) -> Path:
    return Path(output_dir) / RESULTS_FILENAME


# ---------------------------------------------------------------------------
# backend construction


def load_scripted_fixtures(path: str | Path) -> ScriptedBackend:
    """Build a playback backend from a JSON fixtures file.

    Format: {"fixtures": {key: answer}, "default": answer | null} where an
    answer is either a plain string or {"text": ..., "top_logprobs":
    [[token, logprob], ...]}.
    """
    data = json.loads(Path(path).read_text())

    def to_answer(raw):
        if isinstance(raw, str):
            return raw
        pairs = raw.get("top_logprobs")
        return ScriptedResponse(
            raw["text"],
            tuple((t, lp) for t, lp in pairs) if pairs is not None else None,
        )

    fixtures = {k: to_answer(v) for k, v in data.get("fixtures", {}).items()}
    default = data.get("default")
    return ScriptedBackend(
        fixtures, to_answer(default) if default is not None else None
    )


def make_backend(config: CampaignConfig, space: FunctionSpace) -> Backend:
    convention = config_convention(config)
    if config.backend == "oracle":
        backend: Backend = OracleBackend(
            space, convention, tie_break=config.tie_break
        )
    elif config.backend == "adversarial":
        backend = OracleBackend(
            space, convention, mode="adversarial", tie_break=config.tie_break
        )
    elif config.backend == "random_valid":
        backend = RandomValidBackend(space, convention, seed=config.backend_seed)
    elif config.backend == "scripted":
        backend = load_scripted_fixtures(config.fixtures_file)
    elif config.backend == "http":
        backend = HttpBackend(
            config.http_base_url, config.http_model, api_key_env=config.api_key_env
        )
    else:  # unreachable: config.validate() rejects unknown names
        raise CampaignError(f"unknown backend {config.backend!r}")
    if config.cache_dir:
        backend = CachingBackend(backend, config.cache_dir)
    return backend


def config_convention(config: CampaignConfig):
    from .funcspace import IndexConvention

    return IndexConvention(config.start_index, config.max_offset)


def config_space(config: CampaignConfig) -> FunctionSpace:
    return enumerate_space(
        constant_range=config.constant_range, convention=config_convention(config)
    )


# ---------------------------------------------------------------------------
# mining stage


def mine_datasets(config: CampaignConfig) -> dict[int, Dataset]:
    """Mine one dataset per configured length and write them to output_dir."""
    from .mining import mine, save_dataset

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    space = config_space(config)
    convention = config_convention(config)
    datasets = {}
    for length in config.lengths:
        dataset = mine(space, length=length, convention=convention, base=config.base)
        save_dataset(
            dataset,
            out_dir / dataset_filename(length),
            extra_header={"config_digest": config.digest()},
        )
        datasets[length] = dataset
    return datasets


def load_campaign_datasets(config: CampaignConfig) -> dict[int, Dataset]:
    out_dir = Path(config.output_dir)
    datasets = {}
    for length in config.lengths:
        path = out_dir / dataset_filename(length)
        if not path.exists():
            raise CampaignError(
                f"dataset file {path} not found — run the mine stage first"
            )
        dataset = load_dataset(path)
        expected = (
            tuple(config.constant_range),
            length,
            config.start_index,
            config.max_offset,
            config.base,
        )
        p = dataset.parameters
        actual = (
            p.constant_range,
            p.sequence_length,
            p.start_index,
            p.max_offset,
            p.base,
        )
        if actual != expected:
            raise CampaignError(
                f"{path} was mined with parameters {actual}, config wants {expected}"
            )
        datasets[length] = dataset
    return datasets


# ---------------------------------------------------------------------------
# campaign plan


@dataclass(frozen=True)
class PlannedQuery:
    length: int
    run_id: int
    task: Task
    record: AmbiguityRecord

    @property
    def key(self) -> tuple:
        return (
            self.length,
            self.run_id,
            self.task.value,
            self.record.sequence.values,
            self.record.sequence.base,
        )


def _task_targets(dataset: Dataset, task: Task, limit: int | None):
    """Completion/explanation run everywhere; judgment and verbalization only
    make sense where several answers compete."""
    if task in (Task.COMPLETION, Task.EXPLANATION):
        groups = (dataset.ambiguous, dataset.unambiguous)
    else:
        groups = (dataset.ambiguous,)
    for group in groups:
        yield from group[:limit] if limit else group


def plan_queries(
    config: CampaignConfig, datasets: dict[int, Dataset]
) -> Iterator[PlannedQuery]:
    for length in config.lengths:
        dataset = datasets[length]
        for run_id in range(config.n_runs):
            for task in config.task_enums:
                for record in _task_targets(dataset, task, config.limit_sequences):
                    yield PlannedQuery(length, run_id, task, record)


def prompt_seed(config: CampaignConfig, query: PlannedQuery) -> int:
    """Stable per-query seed: distinct few-shot draws per run, reproducible
    across reruns."""
    material = "|".join(
        [
            str(config.rng_seed),
            str(query.length),
            str(query.run_id),
            query.task.value,
            str(query.record.sequence.base),
            ",".join(map(str, query.record.sequence.values)),
        ]
    )
    return int.from_bytes(hashlib.sha256(material.encode()).digest()[:8], "big")


# ---------------------------------------------------------------------------
# results file handling


def _results_header(config: CampaignConfig) -> dict:
    return {
        "format": RESULTS_FORMAT,
        "version": RESULTS_VERSION,
        "config": config.experiment_json(),
        "config_digest": config.digest(),
        "datasets": {str(n): dataset_filename(n) for n in config.lengths},
    }


def read_results(path: str | Path) -> tuple[dict, list[dict]]:
    """Read a results file; raises on missing/incompatible header.

    A malformed trailing line (interrupted write) is dropped; a malformed
    line elsewhere is an error.
    """
    path = Path(path)
    raw_lines = path.read_text().splitlines()
    if not raw_lines:
        raise CampaignError(f"{path}: empty results file")
    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as exc:
        raise CampaignError(f"{path}: unreadable header line ({exc})") from exc
    if header.get("format") != RESULTS_FORMAT:
        raise CampaignError(
            f"{path}: not a results file (format={header.get('format')!r})"
        )
    if header.get("version") != RESULTS_VERSION:
        raise CampaignError(
            f"{path}: results schema version {header.get('version')!r} "
            f"unsupported (expected {RESULTS_VERSION})"
        )
    records = []
    for i, line in enumerate(raw_lines[1:], start=2):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            if i == len(raw_lines):
                break  # torn final line from an interrupted run
            raise CampaignError(f"{path}:{i}: malformed record line ({exc})") from exc
    return header, records


def _record_key(line: dict) -> tuple:
    return (
        line["length"],
        line["run_id"],
        line["task"],
        tuple(line["sequence"]["values"]),
        line["sequence"]["base"],
    )


# ---------------------------------------------------------------------------
# the run loop


@dataclass(frozen=True)
class CampaignOutcome:
    results_file: Path
    queried: int
    skipped: int
    failed: bool = False
    error: str | None = None

    @property
    def total(self) -> int:
        return self.queried + self.skipped


class _Audit:
    def __init__(self, path: Path):
        self._path = path

    def log(self, message: str) -> None:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        with self._path.open("a") as fh:
            fh.write(f"{stamp} {message}\n")


def run_campaign(
    config: CampaignConfig, backend: Backend | None = None
) -> CampaignOutcome:
    """Execute (or resume) the configured campaign.

    A backend failure mid-run leaves everything recorded so far on disk and
    returns a failed outcome rather than raising.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    space = config_space(config)
    datasets = load_campaign_datasets(config)
    if backend is None:
        backend = make_backend(config, space)
    convention = config_convention(config)
    audit = _Audit(out_dir / AUDIT_FILENAME)

    path = results_path(out_dir)
    existing: dict[tuple, dict] = {}
    if path.exists():
        header, records = read_results(path)
        if header["config_digest"] != config.digest():
            raise CampaignError(
                f"{path} belongs to campaign {header['config_digest']}, "
                f"this config is {config.digest()} — use a fresh output directory"
            )
        existing = {_record_key(line): line for line in records}
        # drop any torn trailing line so appends start on a clean boundary
        good_lines = 1 + len(records)
        raw = path.read_text().splitlines()
        if len(raw) > good_lines:
            path.write_text("\n".join(raw[:good_lines]) + "\n")
        audit.log(
            f"resume campaign={config.digest()} existing_records={len(existing)}"
        )
    else:
        path.write_text(canonical_json(_results_header(config)) + "\n")
        audit.log(f"start campaign={config.digest()} backend={backend.backend_id}")

    # answers this run has available for judgment queries, freshest wins
    answered: dict[tuple, dict] = dict(existing)
    queried = skipped = 0
    logprobs_available = config.want_top_logprobs > 0

    with path.open("a") as fh:
        for query in plan_queries(config, datasets):
            if query.key in existing:
                skipped += 1
                continue
            try:
                line, logprobs_available = _execute_query(
                    config,
                    query,
                    backend,
                    space,
                    datasets[query.length],
                    convention,
                    answered,
                    logprobs_available,
                )
            except BackendError as exc:
                audit.log(
                    f"abort campaign={config.digest()} after {queried} queries: {exc}"
                )
                return CampaignOutcome(
                    path, queried, skipped, failed=True, error=str(exc)
                )
            answered[query.key] = line
            _append_line(fh, line)
            queried += 1

    audit.log(
        f"finish campaign={config.digest()} queried={queried} skipped={skipped}"
    )
    return CampaignOutcome(path, queried, skipped)


def _append_line(fh: TextIO, line: dict) -> None:
    fh.write(canonical_json(line) + "\n")
    fh.flush()


def _judged_pair(answered: dict, query: PlannedQuery) -> tuple[str, int] | None:
    """The model's own (explanation text, completion) for this run+sequence,
    if both parsed."""
    base_key = (
        query.length,
        query.run_id,
        query.record.sequence.values,
        query.record.sequence.base,
    )
    compl = answered.get(
        (base_key[0], base_key[1], Task.COMPLETION.value, base_key[2], base_key[3])
    )
    expl = answered.get(
        (base_key[0], base_key[1], Task.EXPLANATION.value, base_key[2], base_key[3])
    )
    if not (compl and expl and compl["valid"] and expl["valid"]):
        return None
    from .funcspace import parse

    fn = parse(expl["parsed"]["value"])
    return (
        render_function(fn, query.record.sequence.base),
        compl["parsed"]["value"],
    )


def _execute_query(
    config: CampaignConfig,
    query: PlannedQuery,
    backend: Backend,
    space: FunctionSpace,
    dataset: Dataset,
    convention,
    answered: dict,
    logprobs_available: bool,
) -> tuple[dict, bool]:
    record = query.record
    judged = None
    note = None
    if query.task is Task.CONSISTENCY_JUDGMENT:
        judged = _judged_pair(answered, query)
        if judged is None:
            # nothing coherent to judge; file the record as invalid
            return (
                _result_line(
                    query,
                    raw_response="",
                    parsed_json={"kind": "invalid"},
                    valid=False,
                    correct=None,
                    top_logprobs=None,
                    judged=None,
                    note="no parseable completion/explanation pair to judge",
                ),
                logprobs_available,
            )

    spec = PromptSpec(
        task=query.task,
        variant=config.variant_enum,
        base=config.base,
        n_shots=config.n_shots,
        shot_sampling=config.shot_sampling_enum,
        rng_seed=prompt_seed(config, query),
        role_text=config.role_text,
        model_name=config.model_name,
    )
    prompt = build_prompt(
        spec,
        record.sequence,
        space,
        convention=convention,
        dataset=dataset,
        judged_explanation=judged[0] if judged else None,
        judged_completion=judged[1] if judged else None,
    )
    want_logprobs = (
        config.want_top_logprobs
        if (query.task is Task.COMPLETION and logprobs_available)
        else 0
    )
    request = CompletionRequest(prompt, want_top_logprobs=want_logprobs)
    try:
        response = backend.complete(request)
    except LogprobsUnsupportedError:
        # backend cannot report distributions: drop the capture and move on
        logprobs_available = False
        note = "top logprobs unavailable from backend"
        response = backend.complete(CompletionRequest(prompt))

    eval_record = build_eval_record(
        query.task, record.sequence, response.text, run_id=query.run_id
    )
    (eval_record,) = annotate_correctness([eval_record], dataset)
    top = response.first_token_top_logprobs
    from .evaluation import eval_record_to_json

    record_json = eval_record_to_json(eval_record)
    return (
        _result_line(
            query,
            raw_response=response.text,
            parsed_json=record_json["parsed"],
            valid=eval_record.valid,
            correct=eval_record.correct,
            top_logprobs=[[e.token, e.logprob] for e in top.entries] if top else None,
            judged=(
                {"explanation": judged[0], "completion": judged[1]} if judged else None
            ),
            note=note,
        ),
        logprobs_available,
    )


def _result_line(
    query: PlannedQuery,
    *,
    raw_response: str,
    parsed_json: dict,
    valid: bool,
    correct: bool | None,
    top_logprobs: list | None,
    judged: dict | None,
    note: str | None,
) -> dict:
    return {
        "length": query.length,
        "run_id": query.run_id,
        "task": query.task.value,
        "sequence": {
            "values": list(query.record.sequence.values),
            "base": query.record.sequence.base,
        },
        "ambiguous": query.record.is_ambiguous,
        "continuations": sorted(query.record.continuations),
        "raw_response": raw_response,
        "parsed": parsed_json,
        "valid": valid,
        "correct": correct,
        "top_logprobs": top_logprobs,
        "judged": judged,
        "note": note,
    }
