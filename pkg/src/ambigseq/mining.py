"""Mining ambiguous sequences from the function space.

A length-L prefix is *ambiguous* when at least two (function, offset) pairs
generate it with different continuations at step L+1. The miner groups every
(function, offset) instance by its value prefix, which is equivalent to — and
much cheaper than — the pairwise definition; :func:`pairwise_ambiguities`
keeps the literal O(n²) pair scan for auditing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .funcspace import (
    ConcreteFunction,
    DEFAULT_CONVENTION,
    FunctionLike,
    FunctionSpace,
    IndexConvention,
    enumerate_space,
    generate_sequence,
    parse,
)

DATASET_FORMAT = "ambigseq.dataset"
DATASET_VERSION = 1


def format_int(value: int, base: int = 10) -> str:
    if base == 10:
        return str(value)
    if base == 2:
        return bin(value) if value >= 0 else "-" + bin(-value)
    raise ValueError(f"unsupported base: {base}")


@dataclass(frozen=True, order=True)
class SequenceRecord:
    """An integer sequence plus the base its numerals are rendered in."""

    values: tuple[int, ...]
    base: int = 10

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("sequence must be non-empty")
        if self.base not in (10, 2):
            raise ValueError(f"unsupported base: {self.base}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    @property
    def length(self) -> int:
        return len(self.values)

    def render(self) -> str:
        return ",".join(format_int(v, self.base) for v in self.values)

    def rebase(self, base: int) -> "SequenceRecord":
        return SequenceRecord(self.values, base)


@dataclass(frozen=True)
class Generator:
    """One way of producing a sequence: a function, an offset, a continuation."""

    function: ConcreteFunction
    offset: int
    continuation: int

    def sort_key(self) -> tuple:
        return (*self.function.sort_key(), self.offset)


@dataclass(frozen=True)
class AmbiguityRecord:
    """A mined sequence together with everything in the space that explains it."""

    sequence: SequenceRecord
    generators: tuple[Generator, ...]

    def __post_init__(self) -> None:
        if not self.generators:
            raise ValueError("a mined record must have at least one generator")
        ordered = tuple(sorted(self.generators, key=Generator.sort_key))
        object.__setattr__(self, "generators", ordered)

    @property
    def continuations(self) -> tuple[int, ...]:
        return tuple(sorted({g.continuation for g in self.generators}))

    @property
    def functions(self) -> tuple[ConcreteFunction, ...]:
        seen: dict[ConcreteFunction, None] = {}
        for g in self.generators:
            seen.setdefault(g.function)
        return tuple(seen)

    @property
    def is_ambiguous(self) -> bool:
        return len(self.continuations) > 1


@dataclass(frozen=True)
class DatasetParameters:
    constant_range: tuple[int, int] = (0, 4)
    sequence_length: int = 4
    start_index: int = 1
    max_offset: int = 4
    base: int = 10
    max_function_value: int | None = 2**63 - 1

    @property
    def convention(self) -> IndexConvention:
        return IndexConvention(self.start_index, self.max_offset)


@dataclass(frozen=True)
class DatasetCounts:
    """The same mining run tallied three ways.

    ``sequences_*`` counts distinct value tuples (the canonical unit);
    ``functions_*`` counts space functions by whether they generate at least
    one ambiguous sequence; ``ambiguous_function_pairs`` counts unordered
    pairs of distinct functions that disagree on some shared prefix; and
    ``self_ambiguous_functions`` counts functions that disagree with
    themselves across offsets (possible at short lengths).
    """

    sequences_ambiguous: int
    sequences_unambiguous: int
    functions_ambiguous: int
    functions_unambiguous: int
    ambiguous_function_pairs: int
    self_ambiguous_functions: int


@dataclass(frozen=True)
class Dataset:
    ambiguous: tuple[AmbiguityRecord, ...]
    unambiguous: tuple[AmbiguityRecord, ...]
    parameters: DatasetParameters

    def __post_init__(self) -> None:
        assert all(r.is_ambiguous for r in self.ambiguous)
        assert not any(r.is_ambiguous for r in self.unambiguous)

    def records(self) -> Iterator[AmbiguityRecord]:
        yield from self.ambiguous
        yield from self.unambiguous

    def find(self, values: Iterable[int]) -> AmbiguityRecord | None:
        return self._by_values.get(tuple(values))

    @property
    def _by_values(self) -> dict[tuple[int, ...], AmbiguityRecord]:
        cached = getattr(self, "_by_values_cache", None)
        if cached is None:
            cached = {r.sequence.values: r for r in self.records()}
            object.__setattr__(self, "_by_values_cache", cached)
        return cached

    def counts(self, space: FunctionSpace | None = None) -> DatasetCounts:
        ambiguous_fns = {f for r in self.ambiguous for f in r.functions}
        all_fns = {f for r in self.records() for f in r.functions}
        if space is not None:
            all_fns |= set(space.functions)
        pairs = set()
        self_ambiguous = set()
        for r in self.ambiguous:
            by_cont: dict[ConcreteFunction, set[int]] = {}
            for g in r.generators:
                by_cont.setdefault(g.function, set()).add(g.continuation)
            for f1, f2 in combinations(sorted(by_cont, key=ConcreteFunction.sort_key), 2):
                if len(by_cont[f1] | by_cont[f2]) > 1:
                    pairs.add((f1, f2))
            for fn, conts in by_cont.items():
                if len(conts) > 1:
                    self_ambiguous.add(fn)
        return DatasetCounts(
            sequences_ambiguous=len(self.ambiguous),
            sequences_unambiguous=len(self.unambiguous),
            functions_ambiguous=len(ambiguous_fns),
            functions_unambiguous=len(all_fns) - len(ambiguous_fns),
            ambiguous_function_pairs=len(pairs),
            self_ambiguous_functions=len(self_ambiguous),
        )


# ---------------------------------------------------------------------------
# Mining
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Instance:
    function: ConcreteFunction
    offset: int
    prefix: tuple[int, ...]
    continuation: int


def _instances(
    space: FunctionSpace, length: int, convention: IndexConvention
) -> list[_Instance]:
    out = []
    for fn in space:
        for offset in convention.offsets:
            seq = generate_sequence(fn, offset, length + 1, convention)
            out.append(_Instance(fn, offset, tuple(seq[:length]), seq[length]))
    return out


def mine(
    space: FunctionSpace,
    length: int = 4,
    convention: IndexConvention = DEFAULT_CONVENTION,
    base: int = 10,
) -> Dataset:
    """Mine every distinct length-``length`` sequence the space can generate.

    Each distinct value tuple becomes one record carrying all of its
    generators; records whose generators disagree on the continuation are the
    ambiguous split.
    """
    groups: dict[tuple[int, ...], list[_Instance]] = {}
    for inst in _instances(space, length, convention):
        groups.setdefault(inst.prefix, []).append(inst)

    ambiguous: list[AmbiguityRecord] = []
    unambiguous: list[AmbiguityRecord] = []
    for prefix in sorted(groups):
        gens = tuple(
            Generator(i.function, i.offset, i.continuation) for i in groups[prefix]
        )
        record = AmbiguityRecord(SequenceRecord(prefix, base), gens)
        (ambiguous if record.is_ambiguous else unambiguous).append(record)

    params = DatasetParameters(
        constant_range=space.constant_range,
        sequence_length=length,
        start_index=convention.start_index,
        max_offset=convention.max_offset,
        base=base,
        max_function_value=space.max_value,
    )
    return Dataset(tuple(ambiguous), tuple(unambiguous), params)


@dataclass(frozen=True)
class PairAmbiguity:
    """Two instances that share a prefix but continue differently."""

    first: Generator
    second: Generator
    prefix: tuple[int, ...]


def pairwise_ambiguities(
    space: FunctionSpace,
    length: int = 4,
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> tuple[PairAmbiguity, ...]:
    """Literal pairwise scan over all (function, offset) instances.

    Kept as the audit path: quadratic in the instance count, compares value
    prefixes element by element exactly as the definition reads.
    """
    instances = _instances(space, length, convention)
    found = []
    for a, b in combinations(instances, 2):
        if a.prefix == b.prefix and a.continuation != b.continuation:
            found.append(
                PairAmbiguity(
                    Generator(a.function, a.offset, a.continuation),
                    Generator(b.function, b.offset, b.continuation),
                    a.prefix,
                )
            )
    return tuple(found)


# ---------------------------------------------------------------------------
# Queries against a space
# ---------------------------------------------------------------------------

def matching_generators(
    values: Iterable[int],
    space: FunctionSpace,
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> tuple[Generator, ...]:
    """Every (function, offset) in the space that generates the given prefix."""
    return _matching_generators(tuple(values), space, convention)


@lru_cache(maxsize=4096)
def _matching_generators(
    values: tuple[int, ...],
    space: FunctionSpace,
    convention: IndexConvention,
) -> tuple[Generator, ...]:
    out = []
    for fn in space:
        for offset in convention.offsets:
            seq = generate_sequence(fn, offset, len(values) + 1, convention)
            if tuple(seq[: len(values)]) == values:
                out.append(Generator(fn, offset, seq[len(values)]))
    return tuple(sorted(out, key=Generator.sort_key))


def valid_continuations(
    sequence: SequenceRecord | Iterable[int],
    space: FunctionSpace,
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> frozenset[int]:
    values = sequence.values if isinstance(sequence, SequenceRecord) else tuple(sequence)
    return frozenset(g.continuation for g in matching_generators(values, space, convention))


def valid_explanations(
    sequence: SequenceRecord | Iterable[int],
    space: FunctionSpace,
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> tuple[ConcreteFunction, ...]:
    values = sequence.values if isinstance(sequence, SequenceRecord) else tuple(sequence)
    seen: dict[ConcreteFunction, None] = {}
    for g in matching_generators(values, space, convention):
        seen.setdefault(g.function)
    return tuple(seen)


def continuations_of(
    fn: FunctionLike,
    values: Iterable[int],
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> frozenset[int]:
    """Continuations ``fn`` assigns to the prefix, over all offsets that fit."""
    values = tuple(values)
    out = set()
    for offset in convention.offsets:
        try:
            seq = generate_sequence(fn, offset, len(values) + 1, convention)
        except Exception:
            continue
        if tuple(seq[: len(values)]) == values:
            out.add(seq[len(values)])
    return frozenset(out)


def space_for(params: DatasetParameters, probe_length: int = 5) -> FunctionSpace:
    """Re-enumerate the function space a dataset was mined from."""
    return enumerate_space(
        constant_range=params.constant_range,
        probe_length=probe_length,
        convention=params.convention,
        max_value=params.max_function_value,
    )


# ---------------------------------------------------------------------------
# Serialization (line-oriented JSON; header first, then one record per line)
# ---------------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_dataset(
    dataset: Dataset, path: str | Path, extra_header: Mapping | None = None
) -> None:
    path = Path(path)
    p = dataset.parameters
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "parameters": {
            "constant_range": list(p.constant_range),
            "sequence_length": p.sequence_length,
            "start_index": p.start_index,
            "max_offset": p.max_offset,
            "base": p.base,
            "max_function_value": p.max_function_value,
        },
    }
    if extra_header:
        overlap = set(extra_header) & set(header)
        if overlap:
            raise ValueError(f"extra_header may not override {sorted(overlap)}")
        header.update(extra_header)
    lines = [_dump(header)]
    for record in sorted(dataset.records(), key=lambda r: r.sequence.values):
        lines.append(
            _dump(
                {
                    "values": list(record.sequence.values),
                    "base": record.sequence.base,
                    "ambiguous": record.is_ambiguous,
                    "generators": [
                        {
                            "function": g.function.text,
                            "offset": g.offset,
                            "continuation": g.continuation,
                        }
                        for g in record.generators
                    ],
                }
            )
        )
    path.write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    if header.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path}: not a dataset file (format={header.get('format')!r})")
    if header.get("version") != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {header.get('version')!r}")
    hp = header["parameters"]
    params = DatasetParameters(
        constant_range=tuple(hp["constant_range"]),
        sequence_length=hp["sequence_length"],
        start_index=hp["start_index"],
        max_offset=hp["max_offset"],
        base=hp["base"],
        max_function_value=hp["max_function_value"],
    )
    ambiguous: list[AmbiguityRecord] = []
    unambiguous: list[AmbiguityRecord] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        raw = json.loads(line)
        gens = tuple(
            Generator(_as_concrete(g["function"]), g["offset"], g["continuation"])
            for g in raw["generators"]
        )
        record = AmbiguityRecord(SequenceRecord(tuple(raw["values"]), raw["base"]), gens)
        if record.is_ambiguous != raw["ambiguous"]:
            raise ValueError(f"{path}: ambiguity flag mismatch for {raw['values']}")
        (ambiguous if record.is_ambiguous else unambiguous).append(record)
    return Dataset(tuple(ambiguous), tuple(unambiguous), params)


def _as_concrete(text: str) -> ConcreteFunction:
    fn = parse(text)
    if not isinstance(fn, ConcreteFunction):
        raise ValueError(f"dataset function is not a template instance: {text!r}")
    return fn
