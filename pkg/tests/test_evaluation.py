"""Evaluation tests: metrics, paired bootstrap, reports, synthetic sets."""

import json

import numpy as np
import pytest

from factrank.clients import (
    EquivalenceScore,
    JudgeVerdict,
    MockClient,
    ReaderAnswer,
    VeracityLabel,
)
from factrank.corpus import ClaimRecord, DocumentSet, DocumentSpan, SubQuestion
from factrank.errors import (
    FactrankError,
    GenerationProtocolError,
    InvalidArgumentError,
    JudgeProtocolError,
)
from factrank.evaluation import (
    AltNegative,
    EvalReport,
    Retriever,
    SyntheticSet,
    build_synthetic_set,
    eval_synthetic,
    export_items_csv,
    load_synthetic_sets,
    metric_equivalence,
    metric_gold_at_10,
    metric_mrr,
    metric_top_doc_relevance,
    metric_veracity,
    paired_bootstrap,
    run_eval,
    save_synthetic_sets,
)
from factrank.fixtures import build_demo_dataset, make_separable_task
from factrank.reranker import Adapter, RankedList
from factrank.trainer import TrainConfig, train

CLAIM = ClaimRecord(claim_id="c", text="the depot reopened in May",
                    veracity_label="SUPPORTS")
SUBQ = SubQuestion(claim_id="c", q_index=0, text="did the depot reopen?",
                   gold_answer="it reopened in May")


def _docset(texts, gold_flags=None):
    gold_flags = gold_flags or [False] * len(texts)
    spans = [
        DocumentSpan(doc_id=f"d{i:02d}#0", article_id=f"d{i:02d}", span_index=0,
                     token_start=0, text=t, is_gold=g)
        for i, (t, g) in enumerate(zip(texts, gold_flags))
    ]
    return DocumentSet(claim_id="c", q_index=0, spans=spans)


def _retriever(client=None):
    client = client or MockClient()
    return Retriever(adapter=Adapter.identity(client.dim), embed_client=client)


class TestPerItemMetrics:
    def test_equivalence_perfect_match(self):
        client = MockClient()
        docset = _docset(["the depot did reopen. Answer: it reopened in May."])
        value = metric_equivalence(
            CLAIM, SUBQ, docset, _retriever(client),
            client.read_answer, client.shorten_answer, client.score_equivalence,
        )
        assert value.value == 1.0 and value.excluded is None

    def test_equivalence_disjoint_answer(self):
        client = MockClient()
        docset = _docset(["the depot did reopen. Answer: purple elephants."])
        value = metric_equivalence(
            CLAIM, SUBQ, docset, _retriever(client),
            client.read_answer, client.shorten_answer, client.score_equivalence,
        )
        assert value.value == 0.0

    def test_equivalence_unanswerable_excluded(self):
        client = MockClient()
        subq = SubQuestion(claim_id="c", q_index=0, text="q?", gold_answer=None)
        value = metric_equivalence(
            CLAIM, subq, _docset(["text"]), _retriever(client),
            client.read_answer, client.shorten_answer, client.score_equivalence,
        )
        assert value.excluded == "unanswerable" and value.value is None

    def test_top_doc_relevance_yes_no(self):
        client = MockClient()
        relevant = _docset(["the depot did reopen after checks"])
        irrelevant = _docset(["gardens bloomed nicely in spring"])
        assert metric_top_doc_relevance(
            CLAIM, SUBQ, relevant, _retriever(client), client.judge_relevance
        ).value == 1.0
        assert metric_top_doc_relevance(
            CLAIM, SUBQ, irrelevant, _retriever(client), client.judge_relevance
        ).value == 0.0

    def test_top_doc_relevance_judge_error_excluded(self):
        def broken(claim, question, passage):
            raise JudgeProtocolError("bad", raw_response="??")

        value = metric_top_doc_relevance(
            CLAIM, SUBQ, _docset(["text"]), _retriever(), broken
        )
        assert value.excluded == "errored"

    def test_gold_at_10_boundary(self):
        client = MockClient()
        # ten wild docs that embed closer to the query, one gold dead last
        texts = [f"did the depot reopen variant {i}" for i in range(10)]
        texts.append("zzz unrelated gold text")
        flags = [False] * 10 + [True]
        value = metric_gold_at_10(CLAIM, SUBQ, _docset(texts, flags), _retriever(client))
        assert value.value == 0.0  # gold at rank 11

        texts9 = texts[:9] + [texts[10]]
        flags9 = [False] * 9 + [True]
        value9 = metric_gold_at_10(CLAIM, SUBQ, _docset(texts9, flags9), _retriever(client))
        assert value9.value == 1.0  # gold at rank 10

    def test_gold_at_10_without_gold_spans(self):
        value = metric_gold_at_10(CLAIM, SUBQ, _docset(["a", "b"]), _retriever())
        assert value.value == 0.0

    def test_veracity_match_and_mismatch(self):
        client = MockClient()
        supports = _docset(["records show the depot reopened in May after checks"])
        assert metric_veracity(
            CLAIM, SUBQ, supports, _retriever(client), client.judge_veracity,
            ("SUPPORTS", "REFUTES", "NOT ENOUGH INFO"),
        ).value == 1.0

        nei_claim = ClaimRecord(claim_id="c", text="the depot reopened in May",
                                veracity_label="REFUTES")
        assert metric_veracity(
            nei_claim, SUBQ, supports, _retriever(client), client.judge_veracity,
            ("SUPPORTS", "REFUTES", "NOT ENOUGH INFO"),
        ).value == 0.0

    def test_veracity_label_outside_set_errored(self):
        def weird(claim, evidence, labels):
            raise JudgeProtocolError("label OUT outside set", raw_response="OUT")

        value = metric_veracity(
            CLAIM, SUBQ, _docset(["text"]), _retriever(), weird, ("A", "B")
        )
        assert value.excluded == "errored"

    def test_veracity_without_label_unanswerable(self):
        client = MockClient()
        claim = ClaimRecord(claim_id="c", text="x y z", veracity_label=None)
        value = metric_veracity(
            claim, SUBQ, _docset(["text"]), _retriever(client),
            client.judge_veracity, ("SUPPORTS",),
        )
        assert value.excluded == "unanswerable"


class TestMetricMrr:
    def _ranked(self, order):
        return RankedList(query_ref=("c", 0),
                          entries=[(d, 1.0 - 0.1 * i) for i, d in enumerate(order)])

    def test_always_rank_one(self):
        sets = [(self._ranked(["pos", "a", "b"]), "pos")] * 5
        assert metric_mrr(sets) == 1.0

    def test_rank_three_single_set(self):
        sets = [(self._ranked(["a", "b", "pos"]), "pos")]
        assert metric_mrr(sets) == pytest.approx(1.0 / 3.0)

    def test_random_rank_six_docs_monte_carlo(self):
        """Uniformly random rank among 6: E[1/rank] = H(6)/6 = 0.40833."""
        rng = np.random.default_rng(2024)
        docs = ["pos", "n1", "n2", "n3", "n4", "n5"]
        sets = []
        for _ in range(10000):
            order = list(rng.permutation(docs))
            sets.append((self._ranked(order), "pos"))
        expected = sum(1.0 / r for r in range(1, 7)) / 6.0
        assert metric_mrr(sets) == pytest.approx(expected, abs=0.02)
        assert expected == pytest.approx(0.40833, abs=1e-4)

    def test_missing_positive_rejected(self):
        with pytest.raises(InvalidArgumentError):
            metric_mrr([(self._ranked(["a", "b"]), "pos")])

    def test_bounds_on_six_doc_sets(self):
        rng = np.random.default_rng(1)
        docs = ["pos", "n1", "n2", "n3", "n4", "n5"]
        for _ in range(100):
            order = list(rng.permutation(docs))
            value = metric_mrr([(self._ranked(order), "pos")])
            assert 1.0 / 6.0 <= value <= 1.0


class TestPairedBootstrap:
    def test_identical_inputs_p_one(self):
        result = paired_bootstrap([0.5] * 50, [0.5] * 50, n_resamples=2000, seed=0)
        assert result.p_estimate == 1.0
        assert not result.significant

    def test_disjoint_inputs_p_zero(self):
        result = paired_bootstrap([0.0] * 200, [1.0] * 200, n_resamples=2000, seed=0)
        assert result.p_estimate == 0.0
        assert result.significant

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(3)
        a = rng.random(100).tolist()
        b = (rng.random(100) + 0.05).tolist()
        r1 = paired_bootstrap(a, b, seed=42)
        r2 = paired_bootstrap(a, b, seed=42)
        assert r1.p_estimate == r2.p_estimate

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(InvalidArgumentError):
            paired_bootstrap([1.0, 2.0], [1.0])

    def test_same_population_false_positive_rate(self):
        """Two i.i.d. Bernoulli(0.5) samples: significance fires rarely."""
        rng = np.random.default_rng(7)
        fired = 0
        for rep in range(100):
            a = (rng.random(200) < 0.5).astype(float)
            b = (rng.random(200) < 0.5).astype(float)
            result = paired_bootstrap(a, b, n_resamples=1000, alpha=0.05, seed=rep)
            fired += int(result.significant)
        assert fired <= 10


class TestRunEval:
    def test_demo_dataset_report_shape(self):
        client = MockClient()
        report = run_eval(
            build_demo_dataset(), client, Adapter.identity(client.dim),
            n_examples=200, resamples=100, seed=0,
        )
        # 10 of 11 demo pairs carry a gold answer (the answerable pool)
        assert report.n_input == 10
        for metric, stats in report.metrics.items():
            n_total = stats["n"] + stats["excluded_unanswerable"] + stats["excluded_errored"]
            assert n_total == report.n_input, metric
            if stats["n"]:
                values = [v for _, _, v in report.items[metric]]
                assert stats["mean"] == pytest.approx(
                    sum(values) / len(values), abs=1e-12
                )

    def test_sampling_is_seeded_and_bounded(self):
        client = MockClient()
        a = run_eval(build_demo_dataset(), client, Adapter.identity(client.dim),
                     n_examples=5, resamples=10, seed=11)
        b = run_eval(build_demo_dataset(), client, Adapter.identity(client.dim),
                     n_examples=5, resamples=10, seed=11)
        assert a.to_dict() == b.to_dict()
        assert a.n_input == 5

    def test_baseline_significance_populated(self):
        client = MockClient()
        dataset = build_demo_dataset()
        baseline = run_eval(dataset, client, Adapter.identity(client.dim),
                            resamples=100, seed=0)
        report = run_eval(dataset, client, Adapter.identity(client.dim),
                          resamples=100, seed=0, baseline=baseline)
        for metric in report.metrics:
            if report.metrics[metric]["n"]:
                assert metric in report.significance
                entry = report.significance[metric]
                # identical runs: every resampled difference is zero
                assert entry["p"] == 1.0 and not entry["significant"]

    def test_mismatched_baseline_rejected(self):
        client = MockClient()
        dataset = build_demo_dataset()
        baseline = run_eval(dataset, client, Adapter.identity(client.dim),
                            n_examples=3, resamples=10, seed=1)
        with pytest.raises(InvalidArgumentError):
            run_eval(dataset, client, Adapter.identity(client.dim),
                     n_examples=5, resamples=10, seed=2, baseline=baseline)

    def test_unknown_metric_rejected(self):
        client = MockClient()
        with pytest.raises(InvalidArgumentError):
            run_eval(build_demo_dataset(), client, Adapter.identity(client.dim),
                     metric_set=("equivalence", "bleu"))

    def test_report_json_round_trip(self):
        client = MockClient()
        report = run_eval(build_demo_dataset(), client, Adapter.identity(client.dim),
                          resamples=10, seed=0)
        loaded = EvalReport.from_dict(json.loads(report.to_json()))
        assert loaded.to_dict() == report.to_dict()

    def test_csv_export(self, tmp_path):
        client = MockClient()
        report = run_eval(build_demo_dataset(), client, Adapter.identity(client.dim),
                          resamples=10, seed=0)
        path = tmp_path / "items.csv"
        export_items_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "metric,claim_id,q_index,value"
        assert len(lines) == 1 + sum(len(v) for v in report.items.values())


class TestSyntheticSets:
    def _set(self, **overrides):
        fields = dict(
            claim="the operation existed",
            question="was there a surveillance operation?",
            positive=(
                "An investigation known as Operation Icefall used wiretaps and "
                "informants during the campaign season, raising oversight questions."
            ),
            hard_negative=(
                "Hearings about the campaign drew heavy coverage, but no direct "
                "evidence about any dedicated operation was presented."
            ),
            alt_negatives=[
                AltNegative(question=f"alt question {i}?", text=f"alt doc {i} body")
                for i in range(4)
            ],
            explanation="the positive names the operation; the hard negative does not",
        )
        fields.update(overrides)
        return SyntheticSet(**fields)

    def test_structural_validation_passes(self):
        synthetic = self._set()
        assert synthetic.validate() is synthetic
        assert len(synthetic.documents()) == 6

    def test_counting_style_fixture_validates(self):
        """Positive names three appointees; hard negative names none."""
        synthetic = self._set(
            claim="the governor has appointed a full third of the board",
            question="how many board members did the governor appoint?",
            positive=(
                "In October the governor named Ruth Vance and Omar Patel to the "
                "board, and a week later added Lena Ortiz, her third appointment."
            ),
            hard_negative=(
                "The governor's board appointments drew praise from allies and "
                "criticism from opponents, arriving amid a contentious session."
            ),
        )
        assert synthetic.validate() is synthetic

    def test_missing_alt_negative_rejected(self):
        bad = self._set(alt_negatives=[AltNegative(question="q", text="t")] * 3)
        with pytest.raises(GenerationProtocolError):
            bad.validate()

    def test_duplicate_documents_rejected(self):
        bad = self._set(hard_negative=self._set().positive)
        with pytest.raises(GenerationProtocolError):
            bad.validate()

    def test_empty_document_rejected(self):
        bad = self._set(positive="  ")
        with pytest.raises(GenerationProtocolError):
            bad.validate()

    def test_build_from_mock_generator(self):
        synthetic = build_synthetic_set(
            "quarry permits now require monitoring",
            "do quarry permits require monitoring?",
            MockClient(),
        )
        assert len(synthetic.documents()) == 6

    def test_generator_missing_field_rejected(self):
        class BrokenGenerator:
            def generate_synthetic(self, claim, question):
                raise GenerationProtocolError("missing hard_negative")

        with pytest.raises(GenerationProtocolError):
            build_synthetic_set("c", "q", BrokenGenerator())

    def test_file_round_trip(self, tmp_path):
        sets = [self._set(), self._set(question="another question?")]
        path = tmp_path / "synth.jsonl"
        save_synthetic_sets(sets, path, config_digest="cafe")
        loaded, header = load_synthetic_sets(path)
        assert loaded == sets
        assert header["config_digest"] == "cafe"


class TestEvalSynthetic:
    def test_query_identical_positive_gives_mrr_one(self):
        client = MockClient()
        claim = "alpha beta gamma delta"
        sets = [
            SyntheticSet(
                claim=claim, question=claim,  # query text = claim once
                positive=claim,  # embeds identically to the query
                hard_negative="totally different words here",
                alt_negatives=[
                    AltNegative(question=f"q{i}", text=f"unrelated body {i}")
                    for i in range(4)
                ],
                explanation="e",
            )
        ]
        report = eval_synthetic(sets, client, Adapter.identity(client.dim),
                                resamples=10)
        assert report.metrics["mrr"]["mean"] == 1.0

    def test_trained_adapter_beats_identity_on_fixture(self):
        tuples, sets = make_separable_task(n_tuples=80, n_eval_sets=12)
        client = MockClient()
        adapter, _ = train(tuples, TrainConfig(epochs=6, seed=0), client)
        identity = Adapter.identity(client.dim)
        mrr_trained = eval_synthetic(sets, client, adapter,
                                     resamples=10).metrics["mrr"]["mean"]
        mrr_identity = eval_synthetic(sets, client, identity,
                                      resamples=10).metrics["mrr"]["mean"]
        assert mrr_trained >= mrr_identity

    def test_report_shape_and_bounds(self):
        _, sets = make_separable_task(n_tuples=20, n_eval_sets=10)
        client = MockClient()
        report = eval_synthetic(sets, client, Adapter.identity(client.dim),
                                resamples=10)
        assert report.metrics["mrr"]["n"] == 10
        for _, _, value in report.items["mrr"]:
            assert 1.0 / 6.0 <= value <= 1.0

    def test_empty_sets_rejected(self):
        client = MockClient()
        with pytest.raises(InvalidArgumentError):
            eval_synthetic([], client, Adapter.identity(client.dim))
