"""Mining tests: definition fidelity, frozen dataset counts, serialization.

The frozen counts (9/389 at length 4, etc.) were computed with the eval-based
oracle in bruteforce.py; each test recomputes the oracle side so the numbers
stay pinned from two independent directions.
"""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambigseq.funcspace import (
    FunctionSpace,
    TemplateKind,
    enumerate_space,
    generate_sequence,
    instantiate,
)
from ambigseq.mining import (
    AmbiguityRecord,
    Dataset,
    Generator,
    SequenceRecord,
    continuations_of,
    format_int,
    load_dataset,
    matching_generators,
    mine,
    pairwise_ambiguities,
    save_dataset,
    space_for,
    valid_continuations,
    valid_explanations,
)

from bruteforce import oracle_continuations, oracle_mine, oracle_space


@pytest.fixture(scope="module")
def space():
    return enumerate_space()


@pytest.fixture(scope="module")
def dataset4(space):
    return mine(space, length=4)


class TestSequenceRecord:
    def test_render_base10(self):
        assert SequenceRecord((7, 11, 15)).render() == "7,11,15"

    def test_render_base2(self):
        assert SequenceRecord((3, 7), base=2).render() == "0b11,0b111"

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            SequenceRecord(())

    def test_rejects_unknown_base(self):
        with pytest.raises(ValueError):
            SequenceRecord((1, 2), base=16)

    def test_format_int(self):
        assert format_int(19) == "19"
        assert format_int(19, 2) == "0b10011"
        assert format_int(0, 2) == "0b0"


class TestKnownAmbiguity:
    """The worked example: [7,11,15] continues as 19 or 15."""

    def test_continuations(self, space):
        assert valid_continuations((7, 11, 15), space) == frozenset({19, 15})

    def test_oracle_agrees(self):
        assert oracle_continuations((7, 11, 15), oracle_space()) == {19, 15}

    def test_generators(self, space):
        gens = matching_generators((7, 11, 15), space)
        as_tuples = {
            (g.function.kind, g.function.c1, g.function.c2, g.offset, g.continuation)
            for g in gens
        }
        assert as_tuples == {
            (TemplateKind.ARITHMETIC, 4, 3, 0, 19),
            (TemplateKind.BIT_OR, 4, 3, 0, 19),
            (TemplateKind.BIT_OR, 3, 3, 1, 15),
        }

    def test_explanations_deduped_in_order(self, space):
        fns = valid_explanations((7, 11, 15), space)
        assert [f.kind for f in fns] == [TemplateKind.ARITHMETIC, TemplateKind.BIT_OR,
                                         TemplateKind.BIT_OR]
        assert len(set(fns)) == 3

    def test_mined_record_matches(self, space):
        ds = mine(space, length=3)
        record = ds.find((7, 11, 15))
        assert record is not None
        assert record.is_ambiguous
        assert record.continuations == (15, 19)

    def test_unambiguous_example(self, space):
        assert valid_continuations((3, 6, 9, 12), space) == frozenset({15})

    def test_identity_ramp_is_ambiguous(self, space):
        # looks innocent, but (x*1)%5 wraps to 0 where x+... continues to 5
        assert valid_continuations((1, 2, 3, 4), space) == frozenset({0, 5})

    def test_unmatched_sequence_has_no_continuations(self, space):
        assert valid_continuations((1, 3, 5, 7), space) == frozenset()
        assert valid_explanations((1, 3, 5, 7), space) == ()


FROZEN_COUNTS = {
    # length: (seq_amb, seq_unamb, fn_amb, fn_unamb, pairs, self_amb)
    2: (48, 267, 106, 91, 617, 1),
    3: (12, 370, 45, 152, 225, 2),
    4: (9, 389, 33, 164, 106, 0),
}


class TestDatasetCounts:
    @pytest.mark.parametrize("length", [2, 3, 4])
    def test_frozen_counts(self, space, length):
        counts = mine(space, length=length).counts(space)
        assert (
            counts.sequences_ambiguous,
            counts.sequences_unambiguous,
            counts.functions_ambiguous,
            counts.functions_unambiguous,
            counts.ambiguous_function_pairs,
            counts.self_ambiguous_functions,
        ) == FROZEN_COUNTS[length]

    @pytest.mark.parametrize("length", [2, 3, 4])
    def test_oracle_recomputes_sequence_counts(self, length):
        table = oracle_mine(oracle_space(), length)
        amb = sum(1 for g in table.values() if len({c for *_, c in g}) > 1)
        expected = FROZEN_COUNTS[length]
        assert (amb, len(table) - amb) == expected[:2]

    def test_function_partition_covers_space(self, space, dataset4):
        counts = dataset4.counts(space)
        assert counts.functions_ambiguous + counts.functions_unambiguous == len(space)

    def test_ambiguity_decreases_with_length_here(self, space):
        seq_counts = [
            mine(space, length=L).counts().sequences_ambiguous for L in (2, 3, 4, 5)
        ]
        assert seq_counts == sorted(seq_counts, reverse=True)


class TestMiningSoundness:
    def test_every_generator_reproduces_its_sequence(self, space, dataset4):
        conv = dataset4.parameters.convention
        for record in dataset4.records():
            for g in record.generators:
                seq = generate_sequence(g.function, g.offset, 5, conv)
                assert tuple(seq[:4]) == record.sequence.values
                assert seq[4] == g.continuation

    def test_records_partition_by_ambiguity(self, dataset4):
        assert all(len(r.continuations) >= 2 for r in dataset4.ambiguous)
        assert all(len(r.continuations) == 1 for r in dataset4.unambiguous)

    def test_sequences_are_distinct(self, dataset4):
        values = [r.sequence.values for r in dataset4.records()]
        assert len(values) == len(set(values))

    def test_generators_sorted_canonically(self, dataset4):
        for record in dataset4.records():
            keys = [g.sort_key() for g in record.generators]
            assert keys == sorted(keys)

    def test_every_space_function_appears(self, space, dataset4):
        seen = {f for r in dataset4.records() for f in r.functions}
        assert seen == set(space.functions)


class TestPairwiseAudit:
    def test_pairwise_matches_grouped(self, space):
        """The O(n^2) definition-faithful scan finds the same ambiguities."""
        small = enumerate_space(constant_range=(0, 2))
        ds = mine(small, length=3)
        pair_prefixes = {p.prefix for p in pairwise_ambiguities(small, length=3)}
        grouped_prefixes = {r.sequence.values for r in ds.ambiguous}
        assert pair_prefixes == grouped_prefixes

    def test_pairwise_full_space_length4(self, space, dataset4):
        pairs = pairwise_ambiguities(space, length=4)
        assert {p.prefix for p in pairs} == {
            r.sequence.values for r in dataset4.ambiguous
        }
        for p in pairs:
            assert p.first.continuation != p.second.continuation


class TestHandBuiltSpaceCompleteness:
    """A space small enough to verify by hand: exhaustive cross-check."""

    def test_three_function_space(self):
        fns = (
            instantiate(TemplateKind.ARITHMETIC, 4, 3),  # 4x+3
            instantiate(TemplateKind.BIT_OR, 3, 3),      # (3x)|3
            instantiate(TemplateKind.BIT_OR, 4, 3),      # (4x)|3
        )
        space = FunctionSpace(
            functions=fns, excluded=(), constant_range=(0, 4),
            probe_indices=tuple(range(1, 11)), max_value=None,
        )
        ds = mine(space, length=3)
        record = ds.find((7, 11, 15))
        assert record is not None and record.is_ambiguous
        assert record.continuations == (15, 19)
        # by hand: arithmetic(4,3)@0 -> 19, bit_or(4,3)@0 -> 19, bit_or(3,3)@1 -> 15
        assert len(record.generators) == 3
        counts = ds.counts(space)
        assert counts.functions_ambiguous == 3
        assert counts.ambiguous_function_pairs == 2  # {ar,bo33}, {bo43,bo33}


class TestMonotonicity:
    @given(st.integers(min_value=2, max_value=6))
    @settings(max_examples=5, deadline=None)
    def test_extending_prefix_never_adds_generators(self, length):
        space = enumerate_space(constant_range=(0, 2))
        ds = mine(space, length=length)
        conv = ds.parameters.convention
        for record in list(ds.ambiguous)[:10]:
            longer = record.sequence.values + (record.generators[0].continuation,)
            shorter_fns = set(valid_explanations(record.sequence.values, space, conv))
            longer_fns = set(valid_explanations(longer, space, conv))
            assert longer_fns <= shorter_fns


class TestContinuationsOf:
    def test_matches_generator_view(self, space, dataset4):
        conv = dataset4.parameters.convention
        for record in dataset4.ambiguous:
            for fn in record.functions:
                expected = {
                    g.continuation
                    for g in record.generators
                    if g.function == fn
                }
                assert continuations_of(fn, record.sequence.values, conv) == expected

    def test_non_generator_yields_nothing(self, space):
        fn = instantiate(TemplateKind.MODULAR, 1, 1)
        assert continuations_of(fn, (7, 11, 15)) == frozenset()


class TestSerialization:
    def test_roundtrip(self, tmp_path, dataset4):
        path = tmp_path / "ds.jsonl"
        save_dataset(dataset4, path)
        loaded = load_dataset(path)
        assert loaded == dataset4

    def test_bytes_stable(self, tmp_path, space):
        ds = mine(space, length=3)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(ds, p1)
        save_dataset(mine(space, length=3), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_wrong_format(self, tmp_path):
        path = tmp_path / "bogus.jsonl"
        path.write_text('{"format":"something-else","version":1}\n')
        with pytest.raises(ValueError):
            load_dataset(path)

    def test_space_for_rebuilds_same_space(self, space, dataset4):
        rebuilt = space_for(dataset4.parameters)
        assert rebuilt == space


class TestRecordInvariants:
    def test_record_requires_generators(self):
        with pytest.raises(ValueError):
            AmbiguityRecord(SequenceRecord((1, 2)), ())

    def test_functions_property_dedupes(self):
        fn = instantiate(TemplateKind.ARITHMETIC, 1, 0)
        rec = AmbiguityRecord(
            SequenceRecord((1, 2)),
            (Generator(fn, 0, 3), Generator(fn, 1, 4)),
        )
        assert rec.functions == (fn,)
        assert rec.is_ambiguous
