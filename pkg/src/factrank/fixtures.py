"""Bundled deterministic fixtures: a demo claim dataset and a separable task.

Everything here is synthetic and generated from fixed seeds so tests and
the CLI walkthrough run offline with byte-identical outputs.

``build_demo_dataset`` returns ten claims engineered against the mock
judges: most (claim, subquestion) pairs yield trainable examples under
every supervision strategy, while a few are deliberately degenerate (no
gold article, no gold answer, nothing judged relevant, everything judged
relevant) so empty-side filtering has known victims per strategy.

``make_separable_task`` builds a contrastive training set whose signal is
a per-family signature token shared by query and positive but absent from
all negatives, plus held-out six-document benchmark sets from the same
families. Hard negatives share the query's topical vocabulary, so raw
hash embeddings prefer them; an adapter must learn to re-weight the
signature to solve the task.
"""
from __future__ import annotations

import numpy as np

from .corpus import Article, ClaimRecord, Dataset, DocumentSpan, Query, SubQuestion
from .evaluation import AltNegative, SyntheticSet
from .supervision import TrainTuple

# --- demo claim dataset --------------------------------------------------

# Word pools for padding article bodies; chosen to avoid the topic words
# used by any fixture question so they never flip a relevance verdict.
_FILLER = (
    "meanwhile observers noted various unrelated administrative matters during "
    "the same period including routine staffing updates archive maintenance and "
    "seasonal scheduling adjustments across several departments"
).split()


def _pad(text: str, total_tokens: int, offset: int = 0) -> str:
    """Right-pad text with filler words to roughly total_tokens tokens."""
    words = text.split()
    i = offset
    while len(words) < total_tokens:
        words.append(_FILLER[i % len(_FILLER)])
        i += 1
    return " ".join(words)


def build_demo_dataset() -> Dataset:
    """Ten-claim offline dataset exercising every pipeline stage."""
    dataset = Dataset()

    def add_claim(claim_id, text, label, subquestions):
        dataset.claims.append(
            ClaimRecord(
                claim_id=claim_id, text=text, source_dataset="fixture",
                veracity_label=label,
            )
        )
        dataset.subquestions[claim_id] = [
            SubQuestion(claim_id=claim_id, q_index=i, text=q, gold_answer=a)
            for i, (q, a) in enumerate(subquestions)
        ]

    def add_article(claim_id, q_index, article_id, title, body, is_gold=False):
        dataset.articles.setdefault((claim_id, q_index), []).append(
            Article(article_id=article_id, title=title, body=body, is_gold=is_gold)
        )

    # c01: fully regular pair; one clearly relevant wild article carrying the
    # answer marker, two off-topic ones, and a gold article.
    add_claim(
        "c01",
        "The Calder bridge renovation finished two years late",
        "SUPPORTS",
        [("When did the Calder bridge renovation actually finish?", "in 2019")],
    )
    add_article(
        "c01", 0, "c01-w1", "Calder bridge timeline",
        _pad(
            "The Calder bridge renovation fell behind schedule early and the "
            "delays kept growing. The Calder bridge renovation finished two "
            "years late according to the council ledger. Answer: in 2019.",
            60,
        ),
    )
    add_article(
        "c01", 0, "c01-w2", "Regional traffic report",
        _pad("Traffic volumes across the region rose modestly last spring.", 55, 3),
    )
    add_article(
        "c01", 0, "c01-w3", "Harbor festival notes",
        _pad("The harbor festival drew record crowds and new food stalls.", 50, 6),
    )
    add_article(
        "c01", 0, "c01-g", "Council ledger excerpt",
        _pad(
            "Ledger entry: the Calder bridge renovation work was declared "
            "finished after inspections. Answer: in 2019.",
            58,
        ),
        is_gold=True,
    )

    # c02: long articles that chunk into several spans each.
    add_claim(
        "c02",
        "Orchard subsidies doubled farm output in Dray county",
        "NOT ENOUGH INFO",
        [("Did orchard subsidies change farm output in Dray county?", "output rose forty percent")],
    )
    long_body = (
        "Dray county agriculture office published a multi part review. "
        + " ".join(
            f"Season {i} recorded steady orchard yields with minor weather swings "
            f"and ordinary market prices for fruit crates across local stands."
            for i in range(1, 25)
        )
        + " Late sections discuss whether orchard subsidies change farm output in "
        "Dray county and conclude the effect was real. Answer: output rose forty percent."
    )
    add_article("c02", 0, "c02-w1", "Dray county agriculture review", long_body)
    add_article(
        "c02", 0, "c02-w2", "Dray county fair",
        _pad("The county fair committee announced new judging categories.", 52, 9),
    )
    add_article(
        "c02", 0, "c02-g", "Subsidy audit",
        _pad(
            "Audit synopsis: orchard subsidies in Dray county coincided with a "
            "measured change in farm output. Answer: output rose forty percent.",
            220,
        ),
        is_gold=True,
    )

    # c03: no gold article at all -> the gold strategy filters this pair.
    add_claim(
        "c03",
        "The Linden tunnel project lost its federal grant",
        "NOT ENOUGH INFO",
        [("Did the Linden tunnel project keep its federal grant?", "the grant was withdrawn")],
    )
    add_article(
        "c03", 0, "c03-w1", "Linden tunnel briefing",
        _pad(
            "Officials discussed whether the Linden tunnel project could keep "
            "its federal grant. Answer: the grant was withdrawn.",
            56,
        ),
    )
    add_article(
        "c03", 0, "c03-w2", "Museum opening",
        _pad("A museum wing opened downtown with a ribbon ceremony.", 48, 2),
    )

    # c04: subquestion without a gold answer -> the lerc strategy filters it.
    add_claim(
        "c04",
        "Ferry fares on the north route were frozen this year",
        "SUPPORTS",
        [("Were ferry fares on the north route frozen this year?", None)],
    )
    add_article(
        "c04", 0, "c04-w1", "North route fares",
        _pad(
            "Ferry fares on the north route were frozen this year per the "
            "operator bulletin, which riders welcomed.",
            54,
        ),
    )
    add_article(
        "c04", 0, "c04-w2", "Dockside repairs",
        _pad("Dockside repairs continued overnight near the terminal.", 47, 4),
    )
    add_article(
        "c04", 0, "c04-g", "Operator bulletin",
        _pad("Bulletin: north route ferry fares stay frozen this year.", 50),
        is_gold=True,
    )

    # c05: every candidate is off-topic for its question -> nothing judged
    # relevant and no answer matches, so distill, distill_gold, lerc, and the
    # combined strategy all filter this pair; gold supervision survives.
    add_claim(
        "c05",
        "Quarry blasting permits now require acoustic monitoring",
        "NOT ENOUGH INFO",
        [("Do quarry blasting permits require acoustic monitoring now?", "yes since March")],
    )
    add_article(
        "c05", 0, "c05-w1", "Garden club minutes",
        _pad("The garden club reviewed rose varieties and compost tips.", 49, 1),
    )
    add_article(
        "c05", 0, "c05-w2", "Library hours",
        _pad("Library hours will shift slightly during the holidays.", 46, 5),
    )
    add_article(
        "c05", 0, "c05-g", "Recreation notice",
        _pad("The recreation board posted swim lane changes for autumn.", 47, 7),
        is_gold=True,
    )

    # c06: every candidate is judged relevant -> no negatives for the
    # distill strategies or the combined recipe; gold and lerc survive.
    add_claim(
        "c06",
        "The Wren street depot reopened after the fire inspection",
        "SUPPORTS",
        [("Did the Wren street depot reopen after the fire inspection?", "it reopened in May")],
    )
    add_article(
        "c06", 0, "c06-w1", "Depot reopening",
        _pad(
            "The Wren street depot did reopen after the fire inspection "
            "cleared the building. Answer: it reopened in May.",
            55,
        ),
    )
    add_article(
        "c06", 0, "c06-w2", "Depot schedule",
        _pad(
            "Crews confirmed the Wren street depot would reopen once the fire "
            "inspection paperwork cleared, and it did reopen.",
            57,
        ),
    )
    add_article(
        "c06", 0, "c06-g", "Inspection record",
        _pad(
            "Record: fire inspection complete; Wren street depot cleared to "
            "reopen for service.",
            52,
        ),
        is_gold=True,
    )

    # c07: two subquestions sharing articles-by-pair; both regular.
    add_claim(
        "c07",
        "Hillcrest clinic expanded weekend hours and added two nurses",
        "SUPPORTS",
        [
            ("Did Hillcrest clinic expand weekend hours?", "yes from June"),
            ("How many nurses did Hillcrest clinic add?", "two nurses"),
        ],
    )
    add_article(
        "c07", 0, "c07-a1", "Clinic hours notice",
        _pad(
            "Hillcrest clinic will expand weekend hours starting soon. "
            "Answer: yes from June.",
            53,
        ),
    )
    add_article(
        "c07", 0, "c07-a2", "Parking advisory",
        _pad("Parking near the plaza will be limited on weekends.", 45, 8),
    )
    add_article(
        "c07", 0, "c07-g1", "Clinic statement",
        _pad("Statement: weekend hours at Hillcrest clinic expand. Answer: yes from June.", 51),
        is_gold=True,
    )
    add_article(
        "c07", 1, "c07-b1", "Staffing update",
        _pad(
            "Hillcrest clinic staffing update confirms how many nurses were "
            "added. Answer: two nurses.",
            54,
        ),
    )
    add_article(
        "c07", 1, "c07-b2", "Bus route change",
        _pad("A bus route will detour around the plaza next month.", 44, 10),
    )
    add_article(
        "c07", 1, "c07-g2", "Hiring record",
        _pad("Hiring record: Hillcrest clinic added nurses this quarter. Answer: two nurses.", 50),
        is_gold=True,
    )

    # c08: claim-as-question pair (question text equals the claim).
    add_claim(
        "c08",
        "Mill road speed cameras were switched off in April",
        "REFUTES",
        [("Mill road speed cameras were switched off in April", "no they stayed on")],
    )
    add_article(
        "c08", 0, "c08-w1", "Camera program",
        _pad(
            "Contrary to rumor, mill road speed cameras were not switched off "
            "in April. Answer: no they stayed on.",
            55,
        ),
    )
    add_article(
        "c08", 0, "c08-w2", "Road resurfacing",
        _pad("Resurfacing work wrapped up ahead of schedule elsewhere.", 46, 11),
    )
    add_article(
        "c08", 0, "c08-g", "Enforcement log",
        _pad(
            "Enforcement log shows mill road speed cameras switched on all "
            "of April. Answer: no they stayed on.",
            53,
        ),
        is_gold=True,
    )

    # c09: regular pair with several mediocre candidates.
    add_claim(
        "c09",
        "The Aster theater restoration used only private donations",
        "NOT ENOUGH INFO",
        [("How was the Aster theater restoration funded?", "private donations only")],
    )
    add_article(
        "c09", 0, "c09-w1", "Theater restoration fund",
        _pad(
            "Donors covered the Aster theater restoration; organizers said it "
            "was funded entirely privately. Answer: private donations only.",
            56,
        ),
    )
    add_article(
        "c09", 0, "c09-w2", "Stage lighting trends",
        _pad("Modern stage lighting favors adjustable fixtures.", 42, 12),
    )
    add_article(
        "c09", 0, "c09-w3", "Matinee listings",
        _pad("Weekend matinee listings resume with a classic series.", 43, 13),
    )
    add_article(
        "c09", 0, "c09-g", "Fund ledger",
        _pad(
            "Fund ledger summary: Aster theater restoration funded by private "
            "gifts. Answer: private donations only.",
            52,
        ),
        is_gold=True,
    )

    # c10: regular pair; relevant article answers incorrectly so the
    # equivalence score stays low while relevance stays high.
    add_claim(
        "c10",
        "Brook lane school added a robotics elective last term",
        "SUPPORTS",
        [("Which elective did Brook lane school add last term?", "a robotics elective")],
    )
    add_article(
        "c10", 0, "c10-w1", "Elective catalog",
        _pad(
            "Brook lane school catalog notes an elective was added last term. "
            "Answer: a ceramics workshop.",
            54,
        ),
    )
    add_article(
        "c10", 0, "c10-w2", "Cafeteria menu",
        _pad("The cafeteria menu rotates soups through the winter.", 41, 14),
    )
    add_article(
        "c10", 0, "c10-g", "Board minutes",
        _pad(
            "Board minutes record which elective Brook lane school added last "
            "term. Answer: a robotics elective.",
            55,
        ),
        is_gold=True,
    )

    return dataset


# Pairs expected to be dropped by empty-side filtering, per strategy.
# Kept next to the dataset builder so tests can assert the filter removes
# exactly these and nothing else.
DEMO_DEGENERATE_PAIRS = {
    "gold": {("c03", 0)},
    "distill": {("c05", 0), ("c06", 0)},
    "distill_gold": {("c05", 0), ("c06", 0)},
    "lerc": {("c04", 0), ("c05", 0)},
    "distill_gold_plus_lerc": {("c05", 0), ("c06", 0)},
}


def write_demo_dataset(directory) -> tuple[str, str]:
    """Materialize the demo dataset; returns (claims_path, articles_path)."""
    from pathlib import Path

    from .corpus import save_dataset

    directory = Path(directory)
    claims_path = directory / "demo.jsonl"
    articles_path = directory / "demo.articles.jsonl"
    save_dataset(build_demo_dataset(), claims_path, articles_path)
    return str(claims_path), str(articles_path)


def _main(argv=None) -> int:
    """``python -m factrank.fixtures DIR`` writes the demo dataset to DIR."""
    import argparse

    parser = argparse.ArgumentParser(description="write the bundled demo dataset")
    parser.add_argument("directory")
    args = parser.parse_args(argv)
    claims_path, articles_path = write_demo_dataset(args.directory)
    print(claims_path)
    print(articles_path)
    return 0


# --- separable contrastive training task --------------------------------

_TOPICS = (
    "harbor dredging permits channel silt",
    "vineyard frost insurance claim payouts",
    "transit depot solar canopy wiring",
    "reservoir spillway sensor calibration",
    "granite quarry haul road drainage",
    "orchard pollinator habitat easements",
    "ferry terminal gangway inspection logs",
    "wetland culvert replacement schedules",
)

_QUERY_TEMPLATE = (
    "did the filing about {topic} satisfy the review board clause under "
    "docket case {sig} given the submitted schedule exhibits"
)

_POSITIVE_TEMPLATE = (
    "ruling recorded for docket case {sig} resolves the outstanding matter "
    "plainly and the decision text settles what the submission sought"
)

_HARD_NEGATIVE_TEMPLATE = (
    "analysts asked whether the filing about {topic} satisfied the review "
    "board clause under the docket given the submitted schedule exhibits but "
    "the memo reached no conclusion on the matter"
)

_SOFT_NEGATIVE_TEMPLATE = (
    "an unrelated circular described routine office procedures and supply "
    "inventories for the month"
)

_NOISE_WORDS = (
    "amber basalt cedar delta ember fjord garnet hollow iris juniper kestrel "
    "lumen mesa nickel onyx prairie quartz rustle summit thicket umber vertex "
    "willow zephyr alcove bramble cinder dapple eddy fern grove heather inlet "
    "knoll ledge moraine notch orchid pebble quarry ridge shale terrace upland "
    "vale wharf yonder bluff crag dune escarp flume gully hummock isthmus"
).split()


def _noise(rng: np.random.Generator, n: int) -> str:
    return " ".join(rng.choice(_NOISE_WORDS, size=n, replace=True))


def _sig(family: int) -> str:
    return f"sig{family:02d}ax"


def make_separable_task(
    n_tuples: int = 200,
    n_families: int = 2,
    n_query_variants: int = 4,
    n_eval_sets: int = 48,
    hard_fraction: float = 1.0,
    noise_tokens: int = 4,
    sig_repeats: int = 3,
    seed: int = 7,
) -> tuple[list[TrainTuple], list[SyntheticSet]]:
    """Build the planted-signature training task plus held-out eval sets.

    Each family has one positive document and several query variants that
    differ only in light noise, so the only signal consistent across a
    family is its signature (plus topic template). Held-out sets reuse the
    family signatures and topics with fresh noise, so solving them requires
    the learned re-weighting rather than memorized strings.
    """
    rng = np.random.default_rng(seed)
    families = list(range(n_families))
    per_variant = -(-n_tuples // (n_families * n_query_variants))  # ceil

    tuples: list[TrainTuple] = []
    for fam in families:
        topic = _TOPICS[fam % len(_TOPICS)]
        sig = " ".join([_sig(fam)] * sig_repeats)
        positive = DocumentSpan(
            doc_id=f"fam{fam:02d}:pos", article_id=f"fam{fam:02d}", span_index=0,
            token_start=0,
            text=_POSITIVE_TEMPLATE.format(sig=sig) + " " + _noise(rng, noise_tokens),
        )
        neg_counter = 0
        for v in range(n_query_variants):
            query_text = (
                _QUERY_TEMPLATE.format(topic=topic, sig=sig)
                + " " + _noise(rng, noise_tokens)
            )
            query = Query(claim_id=f"fam{fam:02d}", q_index=v, text=query_text)
            n_hard = int(per_variant * hard_fraction)
            for j in range(per_variant):
                if j < n_hard:
                    body = _HARD_NEGATIVE_TEMPLATE.format(topic=topic)
                else:
                    body = _SOFT_NEGATIVE_TEMPLATE
                negative = DocumentSpan(
                    doc_id=f"fam{fam:02d}:neg{neg_counter}", article_id=f"fam{fam:02d}",
                    span_index=neg_counter + 1, token_start=0,
                    text=body + " " + _noise(rng, noise_tokens),
                )
                neg_counter += 1
                tuples.append(TrainTuple(query=query, positive=positive, negative=negative))
    tuples = tuples[:n_tuples]

    eval_sets: list[SyntheticSet] = []
    for i in range(n_eval_sets):
        fam = families[i % n_families]
        topic = _TOPICS[fam % len(_TOPICS)]
        sig = " ".join([_sig(fam)] * sig_repeats)
        claim = f"the filing about {topic} satisfied the review board clause"
        question = (
            _QUERY_TEMPLATE.format(topic=topic, sig=sig) + " " + _noise(rng, noise_tokens)
        )
        positive = _POSITIVE_TEMPLATE.format(sig=sig) + " " + _noise(rng, noise_tokens)
        hard_negative = (
            _HARD_NEGATIVE_TEMPLATE.format(topic=topic) + " " + _noise(rng, noise_tokens)
        )
        alts = []
        for k in range(4):
            # Never draw the query's own family; with few families some alt
            # negatives repeat a family but carry fresh noise words.
            other = families[(fam + 1 + (k % (n_families - 1))) % n_families]
            other_sig = " ".join([_sig(other)] * sig_repeats)
            alts.append(
                AltNegative(
                    question=f"what did the ruling under docket case {other_sig} resolve",
                    text=_POSITIVE_TEMPLATE.format(sig=other_sig) + " " + _noise(rng, noise_tokens),
                )
            )
        eval_sets.append(
            SyntheticSet(
                claim=claim,
                question=question,
                positive=positive,
                hard_negative=hard_negative,
                alt_negatives=alts,
                explanation="positive shares the docket signature with the query",
            ).validate()
        )
    return tuples, eval_sets


if __name__ == "__main__":
    import sys

    sys.exit(_main())
