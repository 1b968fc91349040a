"""Scikit-learn-style facade over the full pipeline.

``ConversationalRecommender`` follows the estimator contract
(``get_params``/``set_params``, ``fit``, ``predict``) so the system can be
dropped into generic tooling; the heavy lifting stays in the dedicated
modules.
"""

from __future__ import annotations

import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .corpus import ContextResponsePair, Vocabulary
from .engine import ChatEngine, DecodeConfig
from .kgraph import KGParams, KnowledgeGraph
from .seqmodel import ModelConfig, TransformerLM, perplexity
from .training import Checkpoint, TrainConfig, train, vocab_hash
from .vpdecode import RecommendationResult


class ConversationalRecommender(BaseEstimator):
    """fit(pairs) trains the joint model, predict(pairs) generates
    responses with ranked item recommendations."""

    def __init__(self, n_layers=2, n_heads=4, d_model=128, d_ff=256,
                 max_pos=512, d_entity=128, d_attn=64, kg_layers=1,
                 learning_rate=1e-3, batch_size=16, warmup_steps=50,
                 epochs=3, seed=0, use_kg=True, use_vp=True,
                 beam_width=10, n_max=64, topk=10):
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_model = d_model
        self.d_ff = d_ff
        self.max_pos = max_pos
        self.d_entity = d_entity
        self.d_attn = d_attn
        self.kg_layers = kg_layers
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.warmup_steps = warmup_steps
        self.epochs = epochs
        self.seed = seed
        self.use_kg = use_kg
        self.use_vp = use_vp
        self.beam_width = beam_width
        self.n_max = n_max
        self.topk = topk

    def fit(self, pairs: list[ContextResponsePair], *, vocab: Vocabulary,
            kg: KnowledgeGraph, link_map: dict[str, str],
            valid_pairs: list[ContextResponsePair] | None = None,
            item_names: dict[str, str] | None = None):
        config = TrainConfig(learning_rate=self.learning_rate,
                             batch_size=self.batch_size,
                             warmup_steps=self.warmup_steps,
                             epochs=self.epochs, seed=self.seed,
                             use_kg=self.use_kg, use_vp=self.use_vp)
        model = TransformerLM(ModelConfig(
            n_layers=self.n_layers, n_heads=self.n_heads,
            d_model=self.d_model, d_ff=self.d_ff, max_pos=self.max_pos,
            general_size=vocab.general_size, item_size=vocab.item_size,
            seed=self.seed))
        torch.manual_seed(self.seed)
        kg_params = KGParams(n_entities=kg.n_entities,
                             n_relations=kg.n_relations,
                             n_items=vocab.item_size,
                             d_entity=self.d_entity, d_attn=self.d_attn,
                             n_layers=self.kg_layers)
        self.report_ = train(pairs, valid_pairs or pairs, kg, model,
                             kg_params, link_map, vocab, config)
        ckpt = Checkpoint(model=model, kg_params=kg_params, kg=kg,
                          vocab=vocab, link_map=link_map,
                          train_config=config,
                          item_names=item_names or {},
                          vocab_hash=vocab_hash(vocab), extra={})
        self.engine_ = ChatEngine(ckpt, DecodeConfig(
            beam_width=self.beam_width, n_max=self.n_max, topk=self.topk))
        return self

    def _check_fitted(self):
        if not hasattr(self, "engine_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, pairs: list[ContextResponsePair]
                ) -> list[RecommendationResult]:
        self._check_fitted()
        return [self.engine_.recommend(p.context, p.entity_set)
                for p in pairs]

    def score(self, pairs: list[ContextResponsePair]) -> float:
        """End-to-end Recall@1 over the recall-eligible pairs."""
        self._check_fitted()
        eligible = [p for p in pairs if p.gold_items]
        if not eligible:
            raise ValueError("no recall-eligible pairs")
        hits = 0
        for p, result in zip(eligible, self.predict(eligible)):
            top = {item for item, _ in result.items[:1]}
            if top & set(p.gold_items):
                hits += 1
        return hits / len(eligible)

    def perplexity(self, pairs: list[ContextResponsePair]) -> float:
        self._check_fitted()
        eng = self.engine_
        return perplexity(eng.ckpt.model, pairs, eng.vocab,
                          bias_fn=lambda p: eng.bias_for(p.entity_set),
                          mask_enabled=self.use_vp)
