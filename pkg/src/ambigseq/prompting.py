"""Prompt construction: system prompt, few-shot demonstrations, task blocks.

Every prompt is assembled the same way: a system prompt enumerating the
function space, then zero or more demonstration blocks, then the test block.
A block always opens with ``For the sequence: <numerals>`` followed by the
task's instruction lines; demonstration blocks additionally carry the answer.
Rendering is deterministic: the same spec and target always produce the same
text, byte for byte.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .funcspace import (
    ConcreteFunction,
    DEFAULT_CONVENTION,
    EvaluationError,
    FunctionSpace,
    IndexConvention,
    TemplateKind,
    generate_sequence,
    render_function,
)
from .mining import (
    Dataset,
    SequenceRecord,
    continuations_of,
    format_int,
    valid_continuations,
    valid_explanations,
)


class PromptingError(Exception):
    """Raised when a prompt cannot be built as specified."""


class Task(Enum):
    COMPLETION = "completion"
    EXPLANATION = "explanation"
    CONSISTENCY_JUDGMENT = "consistency_judgment"
    VERBALIZE_ALTERNATIVES = "verbalize_alternatives"


class Variant(Enum):
    PLAIN = "plain"
    RANDOM = "random"
    SELF_CONSISTENT = "self_consistent"
    MOST_LIKELY = "most_likely"


class ShotSampling(Enum):
    RANDOM = "random"
    SAME_CLASS = "same_class"
    EXCLUDE_CLASS = "exclude_class"


DEFAULT_N_SHOTS = {
    Task.COMPLETION: 8,
    Task.EXPLANATION: 6,
    Task.CONSISTENCY_JUDGMENT: 6,
    Task.VERBALIZE_ALTERNATIVES: 2,
}

#: Number-format instruction shared by the completion-style tasks.
NUMBER_FORMAT_LINE = (
    "Give the response as a number (with a base prefix if appropriate), "
    "with no additional commentary."
)

_EXPLANATION_TAIL = (
    "Assume the first number was generated by f(0), the second by f(1), and so on.\n"
    "The function should output numbers in the same representation as the sequence.\n"
    "Give the response in the format:\n"
    "Explanation: <function>"
)

COMPLETION_INSTRUCTIONS = {
    Variant.PLAIN: (
        "Complete the next number and only the next number.\n" + NUMBER_FORMAT_LINE
    ),
    Variant.RANDOM: (
        "Choose a continuation of the following sequence.\n"
        "Assume the sequence is generated by some deterministic function.\n"
        "If multiple functions could generate the sequence, "
        "choose the corresponding continuation randomly."
    ),
    Variant.SELF_CONSISTENT: (
        "Choose a continuation of the following sequence.\n"
        "Note that you will be separately asked to choose a function "
        "which generated the sequence.\n"
        "Please choose a continuation which is consistent with the function "
        "you will choose.\n" + NUMBER_FORMAT_LINE
    ),
    Variant.MOST_LIKELY: (
        "What is the most likely continuation of the following sequence?\n"
        + NUMBER_FORMAT_LINE
    ),
}

EXPLANATION_INSTRUCTIONS = {
    Variant.PLAIN: (
        "Give a function which generates the following sequence.\n"
        + _EXPLANATION_TAIL
    ),
    Variant.RANDOM: (
        "Pick a function which generates the following sequence.\n"
        "If there are multiple possible functions, choose randomly.\n"
        + _EXPLANATION_TAIL
    ),
    Variant.SELF_CONSISTENT: (
        "Choose a function which generates the following sequence.\n"
        "Note that you will be separately asked to choose a continuation "
        "of the sequence.\n"
        "Please choose a function which is consistent with the continuation "
        "you will choose.\n" + _EXPLANATION_TAIL
    ),
    Variant.MOST_LIKELY: (
        "What is the most likely function which generated the following sequence?\n"
        "Assume the first number was generated by f(0), the second by f(1), "
        "the third by f(2), and so on.\n"
        "The function should output the number in the same representation "
        "as the sequence.\n"
        "Give the response in the format:\n"
        "Explanation: <function>"
    ),
}

JUDGMENT_INSTRUCTION = (
    "State whether the explanation and continuation are consistent "
    "with one another.\n"
    "Give the response as either 'consistent' or 'inconsistent', "
    "with no additional commentary."
)

VERBALIZE_DEMO_INSTRUCTION = (
    "Complete the next possible number.\n"
    "Consider up to 5 possible and valid answers separated by escape character "
    "'\\n', as determined by you, {model_name}."
)

VERBALIZE_TEST_INSTRUCTION = (
    "Complete the next number and only the next number.\n"
    "Consider up to 5 possible and valid answers separated by escape character "
    "'\\n', as determined by you, {model_name}."
)

VERBALIZE_SEPARATOR = " \\n "

SYSTEM_INTRO = (
    "Every sequence you are shown was generated by one of the following "
    "Python lambda functions:"
)

OFFSET_NOTE = (
    "Sequences are not always 0 indexed , "
    "they may be offset by an arbitrary i-index value."
)

#: Cap on how many alternatives a verbalization answer may list.
MAX_VERBALIZED_ALTERNATIVES = 5


def build_system_prompt(
    space: FunctionSpace, base: int = 10, role_text: str | None = None
) -> str:
    """The context-level prompt: intro, the full function space, offset note."""
    lines: list[str] = []
    if role_text:
        lines.append(role_text)
        lines.append("")
    lines.append(SYSTEM_INTRO)
    lines.extend(space.texts(base))
    lines.append(OFFSET_NOTE)
    return "\n".join(lines)


@dataclass(frozen=True)
class PromptSpec:
    """Everything that determines how a prompt is rendered for one target."""

    task: Task
    variant: Variant = Variant.PLAIN
    base: int = 10
    n_shots: int | None = None  # None = task default
    shot_sampling: ShotSampling = ShotSampling.RANDOM
    rng_seed: int = 0
    role_text: str | None = None
    model_name: str | None = None

    def __post_init__(self) -> None:
        if self.n_shots is not None and self.n_shots < 0:
            raise ValueError(f"n_shots must be >= 0, got {self.n_shots}")
        if self.base not in (10, 2):
            raise ValueError(f"unsupported base: {self.base}")

    @property
    def resolved_n_shots(self) -> int:
        return DEFAULT_N_SHOTS[self.task] if self.n_shots is None else self.n_shots


@dataclass(frozen=True)
class RenderedPrompt:
    """A fully rendered prompt, split into the parts chat backends need."""

    task: Task
    variant: Variant
    base: int
    system: str
    demonstrations: tuple[tuple[str, str], ...]
    test_query: str
    target: SequenceRecord
    rng_seed: int
    judged_explanation: str | None = None
    judged_completion: int | None = None

    def user_text(self) -> str:
        blocks = [f"{q}\n{a}" for q, a in self.demonstrations]
        blocks.append(self.test_query)
        return "\n\n".join(blocks)

    def full_text(self) -> str:
        return f"{self.system}\n\n{self.user_text()}"


def sample_few_shot(
    space: FunctionSpace,
    k: int,
    mode: ShotSampling,
    target_kinds: frozenset[TemplateKind],
    rng: random.Random,
) -> list[ConcreteFunction]:
    """Draw k distinct demonstration functions from the space.

    ``same_class`` restricts the pool to the target's template classes,
    ``exclude_class`` to everything else; both need a non-empty target class
    set. Raises :class:`PromptingError` when the pool is too small.
    """
    if mode is ShotSampling.RANDOM:
        pool = list(space.functions)
    else:
        if not target_kinds:
            raise PromptingError(
                f"{mode.value} sampling needs a target with known generator classes"
            )
        if mode is ShotSampling.SAME_CLASS:
            pool = [f for f in space if f.kind in target_kinds]
        else:
            pool = [f for f in space if f.kind not in target_kinds]
    if k > len(pool):
        raise PromptingError(
            f"cannot draw {k} demonstrations from a pool of {len(pool)} "
            f"({mode.value})"
        )
    return rng.sample(pool, k)


def _sequence_block(seq: SequenceRecord, instruction: str) -> str:
    return f"For the sequence: {seq.render()}\n{instruction}"


def _demo_sequence(
    fn: ConcreteFunction,
    length: int,
    convention: IndexConvention,
    rng: random.Random,
) -> tuple[SequenceRecord, int]:
    offset = rng.randrange(convention.max_offset + 1)
    values = generate_sequence(fn, offset, length + 1, convention)
    return SequenceRecord(tuple(values[:length])), values[length]


def _verbalize_answer(values: tuple[int, ...], space, convention, base: int) -> str:
    conts = sorted(valid_continuations(values, space, convention))
    conts = conts[:MAX_VERBALIZED_ALTERNATIVES]
    if not conts:
        raise PromptingError(f"no valid continuations for demo sequence {values}")
    rendered = VERBALIZE_SEPARATOR.join(format_int(v, base) for v in conts)
    return rendered + " \\n"


def _interpolate_model(text: str, model_name: str | None) -> str:
    return text if model_name is None else text.replace("{model_name}", model_name)


def build_prompt(
    spec: PromptSpec,
    target: SequenceRecord,
    space: FunctionSpace,
    convention: IndexConvention = DEFAULT_CONVENTION,
    dataset: Dataset | None = None,
    judged_explanation: str | None = None,
    judged_completion: int | None = None,
) -> RenderedPrompt:
    """Render the prompt for one target sequence.

    ``dataset`` (when given) supplies the target's generator classes without a
    space scan. Consistency judgments additionally need the explanation text
    and completion value under test.
    """
    if target.base != spec.base:
        target = target.rebase(spec.base)
    rng = random.Random(spec.rng_seed)
    system = build_system_prompt(space, spec.base, spec.role_text)

    target_kinds: frozenset[TemplateKind] = frozenset()
    if spec.shot_sampling is not ShotSampling.RANDOM:
        record = dataset.find(target.values) if dataset is not None else None
        fns = (
            record.functions
            if record is not None
            else valid_explanations(target.values, space, convention)
        )
        target_kinds = frozenset(f.kind for f in fns)

    shots = sample_few_shot(
        space, spec.resolved_n_shots, spec.shot_sampling, target_kinds, rng
    )

    demos: list[tuple[str, str]] = []
    for i, fn in enumerate(shots):
        demos.append(
            _build_demo(spec, fn, target.length, space, convention, rng, flip=i % 2 == 1)
        )

    test_query = _build_test_query(
        spec, target, judged_explanation, judged_completion
    )
    return RenderedPrompt(
        task=spec.task,
        variant=spec.variant,
        base=spec.base,
        system=system,
        demonstrations=tuple(demos),
        test_query=test_query,
        target=target,
        rng_seed=spec.rng_seed,
        judged_explanation=judged_explanation,
        judged_completion=judged_completion,
    )


def _build_demo(
    spec: PromptSpec,
    fn: ConcreteFunction,
    length: int,
    space: FunctionSpace,
    convention: IndexConvention,
    rng: random.Random,
    flip: bool,
) -> tuple[str, str]:
    for _ in range(50):
        try:
            seq, continuation = _demo_sequence(fn, length, convention, rng)
        except EvaluationError:
            continue
        break
    else:
        raise PromptingError(f"could not generate a demonstration from {fn.text}")
    seq = seq.rebase(spec.base)

    if spec.task is Task.COMPLETION:
        query = _sequence_block(seq, COMPLETION_INSTRUCTIONS[spec.variant])
        return query, format_int(continuation, spec.base)

    if spec.task is Task.EXPLANATION:
        query = _sequence_block(seq, EXPLANATION_INSTRUCTIONS[spec.variant])
        return query, f"Explanation: {render_function(fn, spec.base)}"

    if spec.task is Task.CONSISTENCY_JUDGMENT:
        # alternate consistent and inconsistent examples
        if flip:
            shown = continuation
            while shown in continuations_of(fn, seq.values, convention):
                shown += 1
            label = "inconsistent"
        else:
            shown, label = continuation, "consistent"
        query = _judgment_block(seq, render_function(fn, spec.base), shown)
        return query, label

    if spec.task is Task.VERBALIZE_ALTERNATIVES:
        instruction = _interpolate_model(VERBALIZE_DEMO_INSTRUCTION, spec.model_name)
        query = _sequence_block(seq, instruction)
        return query, _verbalize_answer(seq.values, space, convention, spec.base)

    raise PromptingError(f"unknown task: {spec.task!r}")


def _judgment_block(seq: SequenceRecord, explanation: str, continuation: int) -> str:
    return (
        f"For the sequence: {seq.render()}\n"
        f"Explanation: {explanation}\n"
        f"Continuation: {format_int(continuation, seq.base)}\n"
        f"{JUDGMENT_INSTRUCTION}"
    )


def _build_test_query(
    spec: PromptSpec,
    target: SequenceRecord,
    judged_explanation: str | None,
    judged_completion: int | None,
) -> str:
    if spec.task is Task.COMPLETION:
        return _sequence_block(target, COMPLETION_INSTRUCTIONS[spec.variant])
    if spec.task is Task.EXPLANATION:
        return _sequence_block(target, EXPLANATION_INSTRUCTIONS[spec.variant])
    if spec.task is Task.CONSISTENCY_JUDGMENT:
        if judged_explanation is None or judged_completion is None:
            raise PromptingError(
                "consistency judgments need judged_explanation and judged_completion"
            )
        return _judgment_block(target, judged_explanation, judged_completion)
    if spec.task is Task.VERBALIZE_ALTERNATIVES:
        instruction = _interpolate_model(VERBALIZE_TEST_INSTRUCTION, spec.model_name)
        return _sequence_block(target, instruction)
    raise PromptingError(f"unknown task: {spec.task!r}")
