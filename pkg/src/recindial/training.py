"""Joint optimization of the generation and entity-prediction losses,
finite-difference gradient verification and checkpoint IO."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field, asdict

import torch
from torch import nn

from .corpus import ContextResponsePair, Vocabulary
from .errors import TrainingDivergedError
from .kgraph import KGParams, KnowledgeGraph, kg_loss, knowledge_bias, rgcn_forward
from .seqmodel import ModelConfig, TransformerLM, gen_loss, perplexity

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    grad_accum_steps: int = 1
    warmup_steps: int = 50
    epochs: int = 3
    seed: int = 0
    gen_loss_weight: float = 1.0
    kg_loss_weight: float = 1.0
    use_kg: bool = True   # knowledge bias + L_kg (off = "w/o KG" ablation)
    use_vp: bool = True   # pointer mask in loss and decoding (off = "w/o VP")

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.grad_accum_steps,
               self.epochs) <= 0 or self.warmup_steps < 0:
            raise ValueError("train config values must be positive")


@dataclass
class EpochStats:
    epoch: int
    train_gen_loss: float
    train_kg_loss: float
    valid_gen_loss: float
    valid_kg_loss: float
    valid_ppl: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_ppl: float = math.inf

    def to_dict(self) -> dict:
        return {"epochs": [asdict(e) for e in self.epochs],
                "best_epoch": self.best_epoch,
                "best_valid_ppl": self.best_valid_ppl}


def _entity_indices(pair: ContextResponsePair, kg: KnowledgeGraph) -> list[int]:
    return [kg.entity_index[e] for e in pair.entity_set
            if e in kg.entity_index]


def pair_losses(pair: ContextResponsePair, model: TransformerLM,
                kg: KnowledgeGraph, kg_params: KGParams, H: torch.Tensor,
                link_map: dict[str, str], vocab: Vocabulary,
                config: TrainConfig) -> tuple[torch.Tensor, torch.Tensor, int]:
    """Generation loss plus the sum of entity-prediction terms for one
    pair. A pair contributes entity terms only when its context entity set
    is non-empty and a gold item links into the graph."""
    t_u_idx = _entity_indices(pair, kg) if config.use_kg else []
    b_u = knowledge_bias(t_u_idx, H, kg_params) if (config.use_kg and t_u_idx) else None
    l_gen = gen_loss(model, pair, b_u, vocab, mask_enabled=config.use_vp)
    l_kg = torch.zeros((), dtype=torch.float64)
    n_kg = 0
    if config.use_kg and t_u_idx:
        for item in pair.gold_items:
            ent = link_map.get(item)
            gold = kg.entity_index.get(ent) if ent is not None else None
            if gold is not None:
                l_kg = l_kg + kg_loss(t_u_idx, H, gold, kg_params)
                n_kg += 1
    return l_gen, l_kg, n_kg


def _eval_split(pairs, model, kg, kg_params, link_map, vocab, config):
    gen_total = kg_total = 0.0
    n_tokens = n_kg = 0
    with torch.no_grad():
        H = rgcn_forward(kg, kg_params) if config.use_kg else None
        for pair in pairs:
            if config.use_kg:
                l_gen, l_kg, k = pair_losses(pair, model, kg, kg_params, H,
                                             link_map, vocab, config)
            else:
                l_gen = gen_loss(model, pair, None, vocab,
                                 mask_enabled=config.use_vp)
                l_kg, k = torch.zeros(()), 0
            gen_total += float(l_gen)
            kg_total += float(l_kg)
            n_tokens += len(pair.response)
            n_kg += k
    ppl = math.exp(gen_total / max(1, n_tokens))
    return (gen_total / max(1, len(pairs)),
            kg_total / max(1, n_kg), ppl)


def train(train_pairs: list[ContextResponsePair],
          valid_pairs: list[ContextResponsePair],
          kg: KnowledgeGraph, model: TransformerLM, kg_params: KGParams,
          link_map: dict[str, str], vocab: Vocabulary,
          config: TrainConfig) -> TrainReport:
    """End-to-end joint training: one first-order adaptive-moment
    optimizer over model and graph parameters, linear warm-up, data order
    and initialization fixed by the seed."""
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    params = list(model.parameters()) + list(kg_params.parameters())
    opt = torch.optim.Adam(params, lr=config.learning_rate)
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda step: min(1.0, (step + 1) / max(1, config.warmup_steps)))
    report = TrainReport()
    order = list(range(len(train_pairs)))
    step_in_accum = 0
    for epoch in range(config.epochs):
        model.train()
        rng.shuffle(order)
        epoch_gen = epoch_kg = 0.0
        n_kg_terms = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_pairs[i] for i in order[start:start + config.batch_size]]
            H = rgcn_forward(kg, kg_params) if config.use_kg else None
            batch_gen = torch.zeros((), dtype=torch.float64)
            batch_kg = torch.zeros((), dtype=torch.float64)
            for pair in batch:
                if config.use_kg:
                    l_gen, l_kg, k = pair_losses(pair, model, kg, kg_params,
                                                 H, link_map, vocab, config)
                else:
                    l_gen = gen_loss(model, pair, None, vocab,
                                     mask_enabled=config.use_vp)
                    l_kg, k = torch.zeros(()), 0
                batch_gen = batch_gen + l_gen
                batch_kg = batch_kg + l_kg
                n_kg_terms += k
            total = (config.gen_loss_weight * batch_gen
                     + config.kg_loss_weight * batch_kg) / len(batch)
            if not torch.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch start {start}")
            (total / config.grad_accum_steps).backward()
            step_in_accum += 1
            if step_in_accum % config.grad_accum_steps == 0:
                opt.step()
                sched.step()
                opt.zero_grad()
            epoch_gen += float(batch_gen.detach())
            epoch_kg += float(batch_kg.detach())
        model.eval()
        v_gen, v_kg, v_ppl = _eval_split(valid_pairs, model, kg, kg_params,
                                         link_map, vocab, config)
        stats = EpochStats(epoch=epoch,
                           train_gen_loss=epoch_gen / max(1, len(train_pairs)),
                           train_kg_loss=epoch_kg / max(1, n_kg_terms),
                           valid_gen_loss=v_gen, valid_kg_loss=v_kg,
                           valid_ppl=v_ppl)
        report.epochs.append(stats)
        if v_ppl < report.best_valid_ppl:
            report.best_valid_ppl = v_ppl
            report.best_epoch = epoch
    model.eval()
    return report


def grad_check(loss_fn, params: list[torch.Tensor], eps: float = 1e-5) -> float:
    """Max relative error between autograd gradients and central finite
    differences, elementwise over every entry of every parameter."""
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    with torch.no_grad():
        for p in params:
            grad = p.grad if p.grad is not None else torch.zeros_like(p)
            flat = p.view(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                f_plus = float(loss_fn())
                flat[i] = orig - eps
                f_minus = float(loss_fn())
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2 * eps)
                analytic = float(gflat[i])
                denom = max(abs(numeric), abs(analytic), 1.0)
                worst = max(worst, abs(numeric - analytic) / denom)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints


def vocab_hash(vocab: Vocabulary) -> str:
    h = hashlib.sha256()
    h.update(str(vocab.general_size).encode())
    for tok in vocab.tokens:
        h.update(tok.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


def save_checkpoint(path, model: TransformerLM, kg_params: KGParams,
                    kg: KnowledgeGraph, vocab: Vocabulary,
                    link_map: dict[str, str], train_config: TrainConfig,
                    item_names: dict[str, str] | None = None,
                    extra: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "model_state": model.state_dict(),
        "kg_meta": {
            "entity_ids": kg.entity_ids,
            "relation_ids": kg.relation_ids,
            "triples": kg.triples,
            "d_entity": kg_params.d_entity,
            "d_attn": kg_params.d_attn,
            "n_layers": kg_params.n_layers,
        },
        "kg_state": kg_params.state_dict(),
        "vocab": {"tokens": vocab.tokens,
                  "general_size": vocab.general_size,
                  "item_to_token": vocab.item_to_token},
        "vocab_hash": vocab_hash(vocab),
        "link_map": link_map,
        "item_names": item_names or {},
        "train_config": asdict(train_config),
        "extra": extra or {},
    }
    torch.save(payload, path)


@dataclass
class Checkpoint:
    model: TransformerLM
    kg_params: KGParams
    kg: KnowledgeGraph
    vocab: Vocabulary
    link_map: dict[str, str]
    train_config: TrainConfig
    item_names: dict[str, str]
    vocab_hash: str
    extra: dict


def load_checkpoint(path) -> Checkpoint:
    payload = torch.load(path, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    vocab = Vocabulary(tokens=payload["vocab"]["tokens"],
                       general_size=payload["vocab"]["general_size"],
                       item_to_token=payload["vocab"]["item_to_token"])
    if vocab_hash(vocab) != payload["vocab_hash"]:
        raise ValueError("vocabulary hash mismatch in checkpoint")
    model = TransformerLM(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["model_state"])
    model.eval()
    meta = payload["kg_meta"]
    kg = KnowledgeGraph(entity_ids=meta["entity_ids"],
                        relation_ids=meta["relation_ids"],
                        triples=[tuple(t) for t in meta["triples"]])
    kg_params = KGParams(n_entities=kg.n_entities, n_relations=kg.n_relations,
                         n_items=vocab.item_size, d_entity=meta["d_entity"],
                         d_attn=meta["d_attn"], n_layers=meta["n_layers"])
    kg_params.load_state_dict(payload["kg_state"])
    return Checkpoint(model=model, kg_params=kg_params, kg=kg, vocab=vocab,
                      link_map=payload["link_map"],
                      train_config=TrainConfig(**payload["train_config"]),
                      item_names=payload.get("item_names", {}),
                      vocab_hash=payload["vocab_hash"],
                      extra=payload.get("extra", {}))
