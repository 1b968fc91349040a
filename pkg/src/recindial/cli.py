"""Command line surface: preprocess / train / generate / evaluate / serve.

Flags can also come from a JSON config file (``--config``); explicit
flags win over the file, which wins over defaults. ``RECINDIAL_CHECKPOINT``
and ``RECINDIAL_PORT`` environment variables override the corresponding
flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .corpus import (build_pairs, load_link_map, load_pairs, load_redial,
                     mark_items, mention_counts, save_pairs, split_dataset)
from .errors import RecInDialError
from .evalsuite import (build_report, instances_from_transcript,
                        read_transcript, write_transcript)
from .kgraph import KGParams, KnowledgeGraph
from .seqmodel import ModelConfig, TransformerLM, perplexity
from .training import (TrainConfig, load_checkpoint, save_checkpoint, train)
from .engine import ChatEngine, DecodeConfig


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser,
                       argv: list[str]) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    with open(args.config, encoding="utf-8") as fh:
        file_values = json.load(fh)
    explicit = {a.lstrip("-").replace("-", "_").split("=")[0]
                for a in argv if a.startswith("--")}
    for key, value in file_values.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and attr not in explicit:
            setattr(args, attr, value)
    return args


def cmd_preprocess(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dialogues, vocab, catalog = load_redial(args.data)
    link_map = load_link_map(args.link_map)
    marked = [mark_items(d, vocab) for d in dialogues]
    pairs = build_pairs(marked, link_map, vocab, n_ctx=args.n_ctx)
    train_p, valid_p, test_p = split_dataset(pairs, seed=args.seed)
    vocab.save(out_dir / "vocab.txt")
    save_pairs(out_dir / "train.jsonl", train_p, vocab)
    save_pairs(out_dir / "valid.jsonl", valid_p, vocab)
    save_pairs(out_dir / "test.jsonl", test_p, vocab)
    with open(out_dir / "mention_counts.json", "w", encoding="utf-8") as fh:
        json.dump(mention_counts(train_p), fh)
    with open(out_dir / "item_names.json", "w", encoding="utf-8") as fh:
        json.dump(catalog, fh)
    with open(out_dir / "link_map.json", "w", encoding="utf-8") as fh:
        json.dump(link_map, fh)
    print(f"preprocessed {len(dialogues)} dialogues -> "
          f"{len(train_p)}/{len(valid_p)}/{len(test_p)} pairs in {out_dir}")
    return 0


def cmd_train(args) -> int:
    data_dir = Path(args.data_dir)
    vocab = corpus_mod.Vocabulary.load(data_dir / "vocab.txt")
    train_pairs = load_pairs(data_dir / "train.jsonl")
    valid_pairs = load_pairs(data_dir / "valid.jsonl")
    link_map = load_link_map(args.link_map or data_dir / "link_map.json")
    kg = KnowledgeGraph.load_triples(args.triples)
    with open(data_dir / "item_names.json", encoding="utf-8") as fh:
        item_names = json.load(fh)
    config = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                         grad_accum_steps=args.grad_accum,
                         warmup_steps=args.warmup, epochs=args.epochs,
                         seed=args.seed, use_kg=not args.no_kg,
                         use_vp=not args.no_vp)
    model = TransformerLM(ModelConfig(
        n_layers=args.layers, n_heads=args.heads, d_model=args.d_model,
        d_ff=args.d_ff, max_pos=args.max_pos,
        general_size=vocab.general_size, item_size=vocab.item_size,
        seed=args.seed))
    import torch
    torch.manual_seed(args.seed)
    kg_params = KGParams(n_entities=kg.n_entities,
                         n_relations=kg.n_relations,
                         n_items=vocab.item_size, d_entity=args.d_entity,
                         d_attn=args.d_attn, n_layers=args.kg_layers)
    report = train(train_pairs, valid_pairs, kg, model, kg_params, link_map,
                   vocab, config)
    save_checkpoint(args.out, model, kg_params, kg, vocab, link_map, config,
                    item_names=item_names,
                    extra={"train_report": report.to_dict()})
    report_path = Path(args.out).with_suffix(".report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    print(f"trained {config.epochs} epochs; best valid PPL "
          f"{report.best_valid_ppl:.2f} (epoch {report.best_epoch}); "
          f"checkpoint -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    pairs = load_pairs(Path(args.data_dir) / f"{args.split}.jsonl")
    engine = ChatEngine(ckpt, DecodeConfig(beam_width=args.beam_width,
                                           n_max=args.nmax, topk=args.topk))
    records = []
    for pair in pairs:
        result = engine.recommend(pair.context, pair.entity_set)
        records.append({
            "pair_id": pair.pair_id,
            "generated_text": result.response_text,
            "generated_tokens": corpus_mod.response_words(
                result.response_tokens, ckpt.vocab),
            "items": result.items,
            "mentioned_items": [s["item_id"] for s in result.item_spans],
            "gold_items": pair.gold_items,
            "reference_tokens": pair.reference_tokens,
            "turn_index": pair.turn_index,
        })
    ppl = perplexity(ckpt.model, pairs, ckpt.vocab,
                     bias_fn=lambda p: engine.bias_for(p.entity_set),
                     mask_enabled=ckpt.train_config.use_vp)
    write_transcript(args.out, records, meta={"ppl": ppl,
                                              "checkpoint": str(args.checkpoint),
                                              "beam_width": args.beam_width,
                                              "topk": args.topk})
    print(f"generated {len(records)} responses -> {args.out} (ppl {ppl:.2f})")
    return 0


def cmd_evaluate(args) -> int:
    records, meta = read_transcript(args.transcript)
    gold = {}
    if args.gold:
        for p in load_pairs(args.gold):
            gold[p.pair_id] = {"reference_tokens": p.reference_tokens,
                               "turn_index": p.turn_index}
    counts = {}
    if args.mention_counts:
        with open(args.mention_counts, encoding="utf-8") as fh:
            counts = json.load(fh)
    instances = instances_from_transcript(records, gold)
    report = build_report(instances, mention_counts=counts,
                          ppl=meta.get("ppl"))
    print(report.format_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ckpt = load_checkpoint(args.checkpoint)
    engine = ChatEngine(ckpt, DecodeConfig(beam_width=args.beam_width,
                                           n_max=args.nmax, topk=args.topk))
    app = create_app(engine)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recindial")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file mirroring flags")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("preprocess", help="raw corpus -> vocab + pair splits")
    add_common(p)
    p.add_argument("--data", required=True, help="ReDial-format jsonl")
    p.add_argument("--link-map", required=True, help="item->entity JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-ctx", type=int, default=256)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="joint training -> checkpoint")
    add_common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--triples", required=True, help="TSV triples file")
    p.add_argument("--link-map")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--grad-accum", type=int, default=1)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-pos", type=int, default=512)
    p.add_argument("--d-entity", type=int, default=128)
    p.add_argument("--d-attn", type=int, default=64)
    p.add_argument("--kg-layers", type=int, default=1)
    p.add_argument("--no-kg", action="store_true",
                   help="ablation: drop knowledge bias and entity loss")
    p.add_argument("--no-vp", action="store_true",
                   help="ablation: drop the vocabulary-pointer mask")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="decode a split -> transcript")
    add_common(p)
    p.add_argument("--checkpoint", default=os.environ.get("RECINDIAL_CHECKPOINT"))
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--out", required=True)
    p.add_argument("--beam-width", type=int, default=10)
    p.add_argument("--topk", type=int, default=50)
    p.add_argument("--nmax", type=int, default=64)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="transcript -> metrics report")
    add_common(p)
    p.add_argument("--transcript", required=True)
    p.add_argument("--gold", help="pairs jsonl with references")
    p.add_argument("--mention-counts", help="training mention counts JSON")
    p.add_argument("--out", help="write machine-readable report here")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP chat service")
    add_common(p)
    p.add_argument("--checkpoint", default=os.environ.get("RECINDIAL_CHECKPOINT"))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("RECINDIAL_PORT", "8080")))
    p.add_argument("--beam-width", type=int, default=10)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--nmax", type=int, default=64)
    p.set_defaults(fn=cmd_serve)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args = _apply_config_file(args, parser, argv)
    env_ckpt = os.environ.get("RECINDIAL_CHECKPOINT")
    if env_ckpt and hasattr(args, "checkpoint"):
        args.checkpoint = env_ckpt
    env_port = os.environ.get("RECINDIAL_PORT")
    if env_port and hasattr(args, "port"):
        args.port = int(env_port)
    if getattr(args, "checkpoint", "unset") is None:
        print("error: --checkpoint (or RECINDIAL_CHECKPOINT) is required",
              file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (RecInDialError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
