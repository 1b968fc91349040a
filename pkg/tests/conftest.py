import json

import pytest
import torch

from recindial.corpus import (ContextResponsePair, Vocabulary,
                              build_vocabulary)

torch.set_default_dtype(torch.float64)


@pytest.fixture
def tiny_vocab() -> Vocabulary:
    """5 ordinary words, 3 items (m1/m2/m3)."""
    return build_vocabulary(
        ["m1", "m2", "m3"],
        ["have", "you", "seen", "it", "great"],
        item_names={"m1": "Movie One", "m2": "Movie Two", "m3": "Movie Three"})


@pytest.fixture
def redial_file(tmp_path):
    """Two-dialogue ReDial-format fixture."""
    recs = [
        {
            "conversationId": "c1",
            "initiatorWorkerId": 10,
            "respondentWorkerId": 20,
            "movieMentions": {"111776": "It (2017)"},
            "messages": [
                {"text": "I loved @111776", "senderWorkerId": 10},
                {"text": "Have you seen @111776 ?", "senderWorkerId": 20},
            ],
        },
        {
            "conversationId": "c2",
            "initiatorWorkerId": 1,
            "respondentWorkerId": 2,
            "movieMentions": {},
            "messages": [
                {"text": "hello there", "senderWorkerId": 1},
            ],
        },
    ]
    path = tmp_path / "redial.jsonl"
    with open(path, "w") as fh:
        for r in recs:
            fh.write(json.dumps(r) + "\n")
    return path


@pytest.fixture(scope="session")
def toy_pipeline(tmp_path_factory):
    """A small trained checkpoint over the deterministic toy corpus,
    shared by the engine/service/CLI/estimator suites."""
    from recindial.corpus import (build_pairs, load_link_map, load_redial,
                                  mark_items, mention_counts, split_dataset)
    from recindial.kgraph import KGParams, KnowledgeGraph
    from recindial.seqmodel import ModelConfig, TransformerLM
    from recindial.synthetic import generate_toy_corpus
    from recindial.training import (TrainConfig, load_checkpoint,
                                    save_checkpoint, train)

    out = tmp_path_factory.mktemp("toy")
    paths = generate_toy_corpus(out, n_dialogues=80, n_items=6, n_genres=3,
                                seed=13, offset=1)
    dialogues, vocab, catalog = load_redial(paths["corpus"])
    link_map = load_link_map(paths["link_map"])
    kg = KnowledgeGraph.load_triples(paths["triples"])
    marked = [mark_items(d, vocab) for d in dialogues]
    pairs = build_pairs(marked, link_map, vocab, n_ctx=64)
    train_p, valid_p, test_p = split_dataset(pairs, seed=0)
    torch.manual_seed(0)
    model = TransformerLM(ModelConfig(
        n_layers=1, n_heads=2, d_model=16, d_ff=32, max_pos=128,
        general_size=vocab.general_size, item_size=vocab.item_size, seed=0))
    kg_params = KGParams(n_entities=kg.n_entities,
                         n_relations=kg.n_relations,
                         n_items=vocab.item_size, d_entity=16, d_attn=8,
                         n_layers=1)
    config = TrainConfig(learning_rate=3e-3, batch_size=8, warmup_steps=5,
                         epochs=2, seed=0)
    report = train(train_p, valid_p, kg, model, kg_params, link_map, vocab,
                   config)
    ckpt_path = out / "toy.pt"
    save_checkpoint(ckpt_path, model, kg_params, kg, vocab, link_map,
                    config, item_names=catalog,
                    extra={"mention_counts": mention_counts(train_p)})
    return {
        "paths": paths,
        "checkpoint_path": ckpt_path,
        "checkpoint": load_checkpoint(ckpt_path),
        "vocab": vocab,
        "kg": kg,
        "link_map": link_map,
        "catalog": catalog,
        "splits": (train_p, valid_p, test_p),
        "report": report,
    }


def make_pair(context, response, gold_items=(), entity_set=(),
              turn_index=1, pair_id="p0", dialogue_id="d0"):
    return ContextResponsePair(
        dialogue_id=dialogue_id, pair_id=pair_id, context=list(context),
        response=list(response), gold_items=list(gold_items),
        entity_set=list(entity_set), turn_index=turn_index)
