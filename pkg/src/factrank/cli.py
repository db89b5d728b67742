"""Command-line pipeline: chunk, gen-data, train, rank, eval, synth, synth-eval.

One JSON config file drives every stage; any key can be overridden on the
command line with --set dotted.key=value (values parse as JSON, falling
back to strings). Every output file embeds the sha256 digest of the
resolved config that produced it, so runs are attributable and two runs
with the same config and mock clients are byte-identical.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .clients import ClientConfig, make_client
from .corpus import ChunkConfig, build_document_set, load_dataset, make_query
from .errors import FactrankError, InvalidArgumentError
from .evaluation import (
    EvalReport,
    build_synthetic_set,
    eval_synthetic,
    export_items_csv,
    load_synthetic_sets,
    run_eval,
    save_synthetic_sets,
)
from .lexical import Bm25Params
from .reranker import Adapter, load_checkpoint, rank, save_checkpoint
from .supervision import (
    compute_stats,
    explode_tuples,
    filter_empty,
    generate_examples,
    load_examples,
    save_examples,
)
from .trainer import TrainConfig, train

logger = logging.getLogger("factrank")

STRATEGY_FLAGS = {
    "gold": "gold",
    "distill": "distill",
    "distill-gold": "distill_gold",
    "lerc": "lerc",
    "cfr": "distill_gold_plus_lerc",
}

DEFAULT_CONFIG = {
    "paths": {
        "dataset": "",
        "articles": None,
        "cache_dir": None,
        "output_dir": "out",
    },
    "chunking": {"span_tokens": 200, "stride": 100},
    "retrieval": {"k": 10, "l": 5, "bm25": {"k1": 1.2, "b": 0.75}},
    "clients": {
        "base_url": "mock",
        "parallelism": 8,
        "retries": 3,
        "timeout": 30.0,
        "batch_size": 32,
        "embed_dim": 128,
        "token": None,
    },
    "training": {
        "learning_rate": 1e-3,
        "batch_size": 32,
        "epochs": 12,
        "temperature": 1.0,
        "seed": 0,
        "optimizer": "adam",
        "in_batch_negatives": True,
    },
    "eval": {
        "n_examples": 200,
        "alpha": 0.05,
        "resamples": 10000,
        "seed": 0,
        "metrics": ["equivalence", "top_doc_relevance", "gold_at_10", "veracity"],
        "label_set": None,
    },
}


def _deep_merge(base: dict, overlay: dict, path="") -> dict:
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise InvalidArgumentError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            merged[key] = _deep_merge(base[key], value, where)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _apply_override(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise InvalidArgumentError(f"--set expects key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    keys = dotted.split(".")
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise InvalidArgumentError(f"unknown config key {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise InvalidArgumentError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def load_config(path: str | None, overrides: list[str]) -> tuple[dict, str]:
    """Resolve defaults < env < config file < --set; return (config, digest).

    FACTRANK_BASE_URL and FACTRANK_TOKEN seed the provider settings when
    the config file does not pin them. The bearer token is excluded from
    the digest: it cannot affect any pipeline output.
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    if os.environ.get("FACTRANK_BASE_URL"):
        config["clients"]["base_url"] = os.environ["FACTRANK_BASE_URL"]
    if os.environ.get("FACTRANK_TOKEN"):
        config["clients"]["token"] = os.environ["FACTRANK_TOKEN"]
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"config {path} is not valid JSON: {exc}") from exc
        config = _deep_merge(config, user)
    for assignment in overrides:
        _apply_override(config, assignment)
    digestable = copy.deepcopy(config)
    digestable["clients"]["token"] = None
    canonical = json.dumps(digestable, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return config, digest


def _require_file(path_str: str, what: str) -> Path:
    if not path_str:
        raise InvalidArgumentError(f"{what} path is not set")
    path = Path(path_str)
    if not path.exists():
        raise InvalidArgumentError(f"{what} file {path} does not exist")
    return path


def _out_dir(config: dict) -> Path:
    out = Path(config["paths"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_client(config: dict):
    c = config["clients"]
    client_config = ClientConfig(
        base_url=c["base_url"], timeout=c["timeout"], retries=c["retries"],
        parallelism=c["parallelism"], batch_size=c["batch_size"],
        token=c.get("token"), embed_dim=c["embed_dim"],
    )
    return make_client(client_config, cache_dir=config["paths"]["cache_dir"])


def _load_dataset(config: dict):
    claims_path = _require_file(config["paths"]["dataset"], "dataset")
    return load_dataset(claims_path, config["paths"]["articles"])


def _chunk_config(config: dict) -> ChunkConfig:
    return ChunkConfig(**config["chunking"])


def _bm25_params(config: dict) -> Bm25Params:
    return Bm25Params(**config["retrieval"]["bm25"])


def _adapter_for(config: dict, client, checkpoint: str | None) -> Adapter:
    if checkpoint:
        return load_checkpoint(_require_file(checkpoint, "checkpoint"))
    dim = client.dim
    if dim is None:  # provider dimension unknown until the first call
        dim = client.embed(["dimension probe"]).shape[1]
    return Adapter.identity(dim)


def _docsets(dataset, config):
    chunk_config = _chunk_config(config)
    for claim, subq in dataset.iter_queries():
        docset = build_document_set(
            claim, subq,
            dataset.wild_articles_for(claim.claim_id, subq.q_index),
            dataset.gold_article_for(claim.claim_id, subq.q_index),
            chunk_config,
        )
        yield claim, subq, docset


def cmd_chunk(config: dict, digest: str, out: str | None) -> int:
    dataset = _load_dataset(config)
    path = Path(out) if out else _out_dir(config) / "chunked.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    n_spans = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(
            {"format": "factrank-corpus", "config_digest": digest}, sort_keys=True
        ) + "\n")
        for claim, subq, docset in _docsets(dataset, config):
            n_spans += len(docset)
            fh.write(json.dumps(
                {
                    "claim_id": claim.claim_id,
                    "q_index": subq.q_index,
                    "spans": [s.to_dict() for s in docset.spans],
                },
                sort_keys=True, ensure_ascii=False,
            ) + "\n")
    logger.info("chunked %d spans into %s", n_spans, path)
    return 0


def cmd_gen_data(config: dict, digest: str, strategy_flag: str,
                 out: str | None, stats_out: str | None) -> int:
    strategy = STRATEGY_FLAGS[strategy_flag]
    dataset = _load_dataset(config)
    client = _make_client(config)
    examples = generate_examples(
        dataset, strategy, client,
        k=config["retrieval"]["k"], l=config["retrieval"]["l"],
        bm25_params=_bm25_params(config), chunk_config=_chunk_config(config),
    )
    kept = filter_empty(examples)
    if not kept:
        raise FactrankError(f"strategy {strategy} produced no trainable examples")
    out_path = Path(out) if out else _out_dir(config) / f"train_{strategy}.jsonl"
    save_examples(kept, out_path, config_digest=digest)
    stats = compute_stats(kept)
    stats_path = Path(stats_out) if stats_out else _out_dir(config) / f"stats_{strategy}.json"
    stats_path.parent.mkdir(parents=True, exist_ok=True)
    stats_path.write_text(json.dumps(
        {**stats.to_dict(), "filtered_out": len(examples) - len(kept),
         "config_digest": digest},
        sort_keys=True, indent=2,
    ) + "\n", encoding="utf-8")
    logger.info("generated %d examples (%d filtered) -> %s, stats -> %s",
                len(kept), len(examples) - len(kept), out_path, stats_path)
    return 0


def cmd_train(config: dict, digest: str, data: str,
              out: str | None, report_out: str | None) -> int:
    examples, _header = load_examples(_require_file(data, "training-set"))
    tuples = [t for example in examples for t in explode_tuples(example)]
    if not tuples:
        raise FactrankError("training set exploded to zero tuples")
    client = _make_client(config)
    train_config = TrainConfig(**config["training"])
    adapter, report = train(tuples, train_config, client)
    ckpt_path = Path(out) if out else _out_dir(config) / "adapter.ckpt"
    save_checkpoint(adapter, ckpt_path)
    report_path = Path(report_out) if report_out else _out_dir(config) / "train_report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["config_digest"] = digest
    report_path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    logger.info("trained on %d tuples (%d epochs) -> %s", len(tuples),
                train_config.epochs, ckpt_path)
    return 0


def cmd_rank(config: dict, digest: str, checkpoint: str | None, out: str | None) -> int:
    dataset = _load_dataset(config)
    client = _make_client(config)
    adapter = _adapter_for(config, client, checkpoint)
    path = Path(out) if out else _out_dir(config) / "rankings.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(
            {"format": "factrank-ranking", "config_digest": digest}, sort_keys=True
        ) + "\n")
        for claim, subq, docset in _docsets(dataset, config):
            if not docset.spans:
                continue
            ranked = rank(make_query(claim, subq), docset, adapter, client)
            fh.write(json.dumps(
                {
                    "claim_id": claim.claim_id,
                    "q_index": subq.q_index,
                    "entries": [[doc_id, score] for doc_id, score in ranked.entries],
                },
                sort_keys=True, ensure_ascii=False,
            ) + "\n")
            n += 1
    logger.info("ranked %d queries -> %s", n, path)
    return 0


def cmd_eval(config: dict, digest: str, checkpoint: str | None,
             baseline: str | None, out: str | None, csv_out: str | None) -> int:
    dataset = _load_dataset(config)
    client = _make_client(config)
    adapter = _adapter_for(config, client, checkpoint)
    baseline_report = None
    if baseline:
        baseline_report = EvalReport.from_dict(
            json.loads(_require_file(baseline, "baseline-report").read_text())
        )
    eval_config = config["eval"]
    report = run_eval(
        dataset, client, adapter,
        metric_set=tuple(eval_config["metrics"]),
        n_examples=eval_config["n_examples"],
        alpha=eval_config["alpha"],
        resamples=eval_config["resamples"],
        seed=eval_config["seed"],
        baseline=baseline_report,
        chunk_config=_chunk_config(config),
        label_set=eval_config["label_set"],
        config_digest=digest,
    )
    path = Path(out) if out else _out_dir(config) / "eval_report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    if csv_out:
        export_items_csv(report, csv_out)
    for metric, stats in sorted(report.metrics.items()):
        logger.info("%s: mean=%s n=%d", metric, stats["mean"], stats["n"])
    logger.info("eval report -> %s", path)
    return 0


def cmd_synth(config: dict, digest: str, out: str | None) -> int:
    dataset = _load_dataset(config)
    client = _make_client(config)
    sets = []
    for claim, subq in dataset.iter_queries():
        sets.append(build_synthetic_set(claim.text, subq.text, client))
    if not sets:
        raise FactrankError("dataset contains no (claim, subquestion) pairs")
    path = Path(out) if out else _out_dir(config) / "synthetic.jsonl"
    save_synthetic_sets(sets, path, config_digest=digest)
    logger.info("generated %d synthetic sets -> %s", len(sets), path)
    return 0


def cmd_synth_eval(config: dict, digest: str, sets_path: str,
                   checkpoint: str | None, baseline: str | None,
                   out: str | None) -> int:
    sets, _header = load_synthetic_sets(_require_file(sets_path, "synthetic-sets"))
    client = _make_client(config)
    adapter = _adapter_for(config, client, checkpoint)
    baseline_report = None
    if baseline:
        baseline_report = EvalReport.from_dict(
            json.loads(_require_file(baseline, "baseline-report").read_text())
        )
    eval_config = config["eval"]
    report = eval_synthetic(
        sets, client, adapter,
        alpha=eval_config["alpha"], resamples=eval_config["resamples"],
        seed=eval_config["seed"], baseline=baseline_report, config_digest=digest,
    )
    path = Path(out) if out else _out_dir(config) / "synth_report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    logger.info("synthetic MRR=%s over %d sets -> %s",
                report.metrics["mrr"]["mean"], report.metrics["mrr"]["n"], path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factrank",
        description="Evidence retrieval pipeline for fact-checking.",
    )
    parser.add_argument("--version", action="version", version=f"factrank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="pipeline config JSON file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (dotted path)")
        return p

    common(sub.add_parser("chunk", help="chunk articles into token spans")) \
        .add_argument("--out")

    gen = common(sub.add_parser("gen-data", help="generate a contrastive training set"))
    gen.add_argument("--strategy", required=True, choices=sorted(STRATEGY_FLAGS))
    gen.add_argument("--out")
    gen.add_argument("--stats")

    tr = common(sub.add_parser("train", help="train the reranker adapter"))
    tr.add_argument("--data", required=True, help="training-set JSONL file")
    tr.add_argument("--out")
    tr.add_argument("--report")

    rk = common(sub.add_parser("rank", help="rank every query's document set"))
    rk.add_argument("--checkpoint")
    rk.add_argument("--out")

    ev = common(sub.add_parser("eval", help="run retrieval/veracity evaluation"))
    ev.add_argument("--checkpoint")
    ev.add_argument("--baseline", help="baseline eval report for significance")
    ev.add_argument("--out")
    ev.add_argument("--csv", dest="csv_out", help="also export per-item scores as CSV")

    sy = common(sub.add_parser("synth", help="generate synthetic benchmark sets"))
    sy.add_argument("--out")

    se = common(sub.add_parser("synth-eval", help="evaluate MRR on synthetic sets"))
    se.add_argument("--sets", required=True)
    se.add_argument("--checkpoint")
    se.add_argument("--baseline")
    se.add_argument("--out")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config, digest = load_config(args.config, args.overrides)
        if args.command == "chunk":
            return cmd_chunk(config, digest, args.out)
        if args.command == "gen-data":
            return cmd_gen_data(config, digest, args.strategy, args.out, args.stats)
        if args.command == "train":
            return cmd_train(config, digest, args.data, args.out, args.report)
        if args.command == "rank":
            return cmd_rank(config, digest, args.checkpoint, args.out)
        if args.command == "eval":
            return cmd_eval(config, digest, args.checkpoint, args.baseline,
                            args.out, args.csv_out)
        if args.command == "synth":
            return cmd_synth(config, digest, args.out)
        return cmd_synth_eval(config, digest, args.sets, args.checkpoint,
                              args.baseline, args.out)
    except FactrankError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
