"""Supervision strategy tests: set algebra, filtering, explosion, budgets."""

import numpy as np
import pytest

from factrank.clients import EquivalenceScore, JudgeVerdict, MockClient, ReaderAnswer
from factrank.corpus import DocumentSpan, Query
from factrank.errors import InvalidArgumentError, JudgeProtocolError
from factrank.fixtures import DEMO_DEGENERATE_PAIRS, build_demo_dataset
from factrank.lexical import CandidateSets
from factrank.supervision import (
    ContrastiveExample,
    compute_stats,
    explode_tuples,
    filter_empty,
    gen_cfr,
    gen_distill,
    gen_distill_gold,
    gen_gold,
    gen_lerc,
    generate_examples,
    load_examples,
    save_examples,
)

QUERY = Query(claim_id="c", q_index=0, text="claim question")


def _span(doc_id, is_gold=False, text=None):
    return DocumentSpan(
        doc_id=doc_id, article_id=doc_id.split("#")[0], span_index=0,
        token_start=0, text=text or f"text of {doc_id}", is_gold=is_gold,
    )


def _candidates(n_wild=10, n_gold=5, stray_gold_in_wild=False):
    wild = [_span(f"w{i:02d}#0") for i in range(n_wild)]
    if stray_gold_in_wild:
        wild.append(_span("gx#0", is_gold=True))
    gold = [_span(f"g{i:02d}#0", is_gold=True) for i in range(n_gold)]
    return CandidateSets(wild=wild, gold=gold)


def _judge(relevant_ids):
    def judge(claim, question, passage):
        doc = passage.split()[-1]
        return JudgeVerdict(relevant=doc in relevant_ids, raw_response="Yes")

    return judge


def _scripted_lerc(scores_by_doc):
    """Reader echoes the doc id; scorer looks it up in the script."""

    def reader(claim, question, passage):
        return ReaderAnswer(answer=passage.split()[-1])

    def shortener(answer):
        return answer

    def scorer(gold_short, candidate_short, question):
        return EquivalenceScore(score=scores_by_doc.get(candidate_short, 0.0))

    return reader, shortener, scorer


class TestGenGold:
    def test_single_top_gold_positive(self):
        example = gen_gold(QUERY, _candidates(n_wild=10, n_gold=5))
        assert len(example.positives) == 1
        assert example.positives[0].doc_id == "g00#0"  # top of the sorted gold list
        assert len(example.negatives) == 10

    def test_no_gold_is_filtered_later(self):
        example = gen_gold(QUERY, _candidates(n_wild=4, n_gold=0))
        assert example.positives == []
        assert filter_empty([example]) == []

    def test_stray_gold_span_excluded_from_negatives(self):
        example = gen_gold(QUERY, _candidates(stray_gold_in_wild=True))
        assert all(not s.is_gold for s in example.negatives)
        assert "gx#0" not in {s.doc_id for s in example.negatives}


class TestGenDistill:
    def test_partition_counts(self):
        candidates = _candidates(n_wild=10, n_gold=5)
        relevant = {"w00#0", "w03#0", "w05#0", "w09#0"}
        example = gen_distill(QUERY, candidates, _judge(relevant), "claim", "question")
        assert len(example.positives) == 4
        assert len(example.negatives) == 6
        assert {s.doc_id for s in example.positives} == relevant

    def test_all_irrelevant_filtered(self):
        example = gen_distill(QUERY, _candidates(), _judge(set()), "c", "q")
        assert filter_empty([example]) == []

    def test_verdicts_recorded(self):
        example = gen_distill(QUERY, _candidates(n_wild=2, n_gold=0),
                              _judge({"w00#0"}), "c", "q")
        assert set(example.metadata["verdicts"]) == {"w00#0", "w01#0"}

    def test_judge_failure_discards_span(self):
        def flaky(claim, question, passage):
            if passage.endswith("w01#0"):
                raise JudgeProtocolError("bad response", raw_response="??")
            return JudgeVerdict(relevant=False, raw_response="No")

        example = gen_distill(QUERY, _candidates(n_wild=3, n_gold=0), flaky, "c", "q")
        ids = {s.doc_id for s in example.positives + example.negatives}
        assert "w01#0" not in ids
        assert example.metadata["unscored"] == ["w01#0"]

    def test_distill_gold_covers_both_sets_and_budget(self):
        calls = []

        def counting(claim, question, passage):
            calls.append(passage)
            return JudgeVerdict(relevant=True, raw_response="Yes")

        candidates = _candidates(n_wild=10, n_gold=5)
        gen_distill_gold(QUERY, candidates, counting, "c", "q")
        assert len(calls) == 15  # one judge call per span of S and G


class TestGenLerc:
    def test_threshold_rules(self):
        candidates = CandidateSets(
            wild=[_span("a#0"), _span("b#0"), _span("c#0"), _span("d#0")], gold=[]
        )
        reader, shortener, scorer = _scripted_lerc(
            {"a#0": 0.9, "b#0": 0.8, "c#0": 0.2, "d#0": 0.5}
        )
        example = gen_lerc(QUERY, candidates, reader, shortener, scorer,
                           "gold answer", "claim", "question")
        assert [s.doc_id for s in example.positives] == ["a#0"]  # single best > 0.7
        assert [s.doc_id for s in example.negatives] == ["c#0"]  # only < 0.3
        # 0.8 lost single-positive selection, 0.5 sits in the discarded mid-band

    def test_no_score_above_threshold_filtered(self):
        candidates = CandidateSets(wild=[_span("a#0"), _span("b#0")], gold=[])
        reader, shortener, scorer = _scripted_lerc({"a#0": 0.6, "b#0": 0.1})
        example = gen_lerc(QUERY, candidates, reader, shortener, scorer,
                           "gold", "c", "q")
        assert example.positives == []
        assert filter_empty([example]) == []

    def test_missing_gold_answer_filtered(self):
        reader, shortener, scorer = _scripted_lerc({})
        example = gen_lerc(QUERY, _candidates(), reader, shortener, scorer,
                           None, "c", "q")
        assert example.positives == [] and example.negatives == []

    def test_identical_answers_score_one_under_mock(self):
        client = MockClient()
        candidates = CandidateSets(
            wild=[_span("a#0", text="text. Answer: the gold answer."),
                  _span("b#0", text="totally unrelated words here")],
            gold=[],
        )
        example = gen_lerc(
            QUERY, candidates, client.read_answer, client.shorten_answer,
            client.score_equivalence, "the gold answer", "claim text", "question text",
        )
        assert [s.doc_id for s in example.positives] == ["a#0"]
        assert example.metadata["equivalence"]["a#0"] == 1.0

    def test_positive_tie_broken_by_doc_id(self):
        candidates = CandidateSets(wild=[_span("b#0"), _span("a#0")], gold=[])
        reader, shortener, scorer = _scripted_lerc({"a#0": 0.9, "b#0": 0.9})
        example = gen_lerc(QUERY, candidates, reader, shortener, scorer,
                           "gold", "c", "q")
        assert [s.doc_id for s in example.positives] == ["a#0"]

    def test_budget_at_most_fifteen_reader_calls(self):
        calls = []

        def reader(claim, question, passage):
            calls.append(passage)
            return ReaderAnswer(answer="x")

        candidates = _candidates(n_wild=10, n_gold=5)
        gen_lerc(QUERY, candidates, reader, lambda a: a,
                 lambda g, c, q: EquivalenceScore(score=0.0), "gold", "c", "q")
        assert len(calls) == 15


class TestGenCfr:
    def test_set_algebra(self):
        """dg D+={a,b}, lerc D+={b,c}, dg D-={c,d,e}  ->  D+={a,b,c}, D-={d,e}."""
        spans = {k: _span(f"{k}#0") for k in "abcde"}
        candidates = CandidateSets(wild=list(spans.values()), gold=[])
        judge = _judge({"a#0", "b#0"})
        reader, shortener, scorer = _scripted_lerc({"b#0": 0.9, "c#0": 0.95})
        example = gen_cfr(QUERY, candidates, judge, reader, shortener, scorer,
                          "gold", "claim", "question")
        # lerc keeps only its single best positive (c), so the union is {a,b,c}
        assert {s.doc_id for s in example.positives} == {"a#0", "b#0", "c#0"}
        assert {s.doc_id for s in example.negatives} == {"d#0", "e#0"}
        assert example.strategy == "distill_gold_plus_lerc"

    def test_lerc_filtered_falls_back_to_distill_gold(self):
        spans = [_span("a#0"), _span("b#0")]
        candidates = CandidateSets(wild=spans, gold=[])
        judge = _judge({"a#0"})
        reader, shortener, scorer = _scripted_lerc({})
        example = gen_cfr(QUERY, candidates, judge, reader, shortener, scorer,
                          None, "c", "q")  # no gold answer -> lerc side empty
        assert {s.doc_id for s in example.positives} == {"a#0"}
        assert {s.doc_id for s in example.negatives} == {"b#0"}

    def test_cfr_positives_superset_of_distill_gold(self):
        client = MockClient()
        dataset = build_demo_dataset()
        dg = {
            (e.query.claim_id, e.query.q_index): {s.doc_id for s in e.positives}
            for e in generate_examples(dataset, "distill_gold", client)
        }
        cfr = generate_examples(dataset, "distill_gold_plus_lerc", client)
        for example in cfr:
            key = (example.query.claim_id, example.query.q_index)
            assert {s.doc_id for s in example.positives} >= dg[key]


class TestFilterExplodeStats:
    def test_filter_empty_rules(self):
        keep = ContrastiveExample(QUERY, [_span("p#0")], [_span("n#0")], "gold")
        drop = ContrastiveExample(QUERY, [_span("p#0")], [], "gold")
        assert filter_empty([keep, drop]) == [keep]
        assert filter_empty([]) == []

    def test_explode_counts(self):
        example = ContrastiveExample(
            QUERY,
            [_span("p0#0"), _span("p1#0")],
            [_span("n0#0"), _span("n1#0"), _span("n2#0")],
            "distill",
        )
        tuples = explode_tuples(example)
        assert len(tuples) == 6
        pairs = {(t.positive.doc_id, t.negative.doc_id) for t in tuples}
        assert len(pairs) == 6  # every (d+, d-) pair exactly once

    def test_single_pair(self):
        example = ContrastiveExample(QUERY, [_span("p#0")], [_span("n#0")], "gold")
        assert len(explode_tuples(example)) == 1

    def test_stats_means(self):
        e1 = ContrastiveExample(QUERY, [_span("p#0")], [_span("n#0")], "gold")
        e2 = ContrastiveExample(
            QUERY, [_span(f"p{i}#0") for i in range(3)], [_span("n2#0")], "gold"
        )
        stats = compute_stats([e1, e2])
        assert stats.mean_pos == 2.0
        assert stats.mean_neg == 1.0
        assert stats.n_examples == 2

    def test_stats_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            compute_stats([])

    def test_partition_invariant_enforced(self):
        with pytest.raises(InvalidArgumentError):
            ContrastiveExample(QUERY, [_span("x#0")], [_span("x#0")], "gold")


class TestGenerateExamples:
    def test_demo_dataset_filtering_matches_construction(self):
        client = MockClient()
        dataset = build_demo_dataset()
        for strategy, expected_drops in DEMO_DEGENERATE_PAIRS.items():
            examples = generate_examples(dataset, strategy, client)
            kept = filter_empty(examples)
            dropped = {(e.query.claim_id, e.query.q_index) for e in examples} - {
                (e.query.claim_id, e.query.q_index) for e in kept
            }
            assert dropped == expected_drops, strategy

    def test_disjoint_positive_negative_everywhere(self):
        client = MockClient()
        dataset = build_demo_dataset()
        for strategy in DEMO_DEGENERATE_PAIRS:
            for example in generate_examples(dataset, strategy, client):
                pos = {s.doc_id for s in example.positives}
                neg = {s.doc_id for s in example.negatives}
                assert not pos & neg

    def test_deterministic_regeneration(self):
        client = MockClient()
        dataset = build_demo_dataset()
        a = generate_examples(dataset, "distill_gold_plus_lerc", client)
        b = generate_examples(dataset, "distill_gold_plus_lerc", MockClient())
        assert a == b
        assert compute_stats(filter_empty(a)) == compute_stats(filter_empty(b))

    def test_output_ordered_by_claim_and_qindex(self):
        client = MockClient()
        examples = generate_examples(build_demo_dataset(), "gold", client)
        keys = [(e.query.claim_id, e.query.q_index) for e in examples]
        assert keys == sorted(keys)

    def test_unknown_strategy_rejected(self):
        with pytest.raises(InvalidArgumentError):
            generate_examples(build_demo_dataset(), "rouge", MockClient())

    def test_explosion_totals_match(self):
        client = MockClient()
        examples = filter_empty(
            generate_examples(build_demo_dataset(), "distill_gold", client)
        )
        total = sum(len(e.positives) * len(e.negatives) for e in examples)
        tuples = [t for e in examples for t in explode_tuples(e)]
        assert len(tuples) == total


class TestTrainingSetFile:
    def test_round_trip(self, tmp_path):
        client = MockClient()
        examples = filter_empty(
            generate_examples(build_demo_dataset(), "gold", client)
        )
        path = tmp_path / "train.jsonl"
        save_examples(examples, path, config_digest="deadbeef")
        loaded, header = load_examples(path)
        assert loaded == examples
        assert header["config_digest"] == "deadbeef"
        assert header["strategy"] == "gold"

    def test_random_examples_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        examples = []
        for i in range(10):
            n_pos = int(rng.integers(1, 4))
            n_neg = int(rng.integers(1, 5))
            examples.append(
                ContrastiveExample(
                    Query(claim_id=f"c{i}", q_index=0, text=f"q {i}"),
                    [_span(f"p{i}_{j}#0") for j in range(n_pos)],
                    [_span(f"n{i}_{j}#0") for j in range(n_neg)],
                    "distill",
                    metadata={"verdicts": {f"p{i}_0#0": "Yes"}},
                )
            )
        path = tmp_path / "t.jsonl"
        save_examples(examples, path)
        loaded, _ = load_examples(path)
        assert loaded == examples
