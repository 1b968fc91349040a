"""Decoder-only language model over the partitioned vocabulary.

Small by design: the real system plugs a pretrained checkpoint in through
the :class:`LogitScorer` protocol; this module provides a desk-scale
stand-in that is trainable end to end in float64 on a CPU, plus the
masked, bias-aware generation loss and perplexity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import torch
from torch import nn

from .corpus import ContextResponsePair, Vocabulary
from .errors import CorpusError, DimensionError

NEG_INF = float("-inf")


@dataclass
class ModelConfig:
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 128
    d_ff: int = 256
    max_pos: int = 512
    general_size: int = 0
    item_size: int = 0
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise DimensionError("d_model must be divisible by n_heads")

    @property
    def vocab_size(self) -> int:
        return self.general_size + self.item_size


@runtime_checkable
class LogitScorer(Protocol):
    """Anything that maps a token prefix to a pre-mask, pre-bias logit
    vector over the full vocabulary."""

    def score(self, prefix: Sequence[int]) -> torch.Tensor: ...


class _Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        dt = torch.float64
        d, h = cfg.d_model, cfg.n_heads
        self.n_heads = h
        self.d_head = d // h
        self.ln1 = nn.LayerNorm(d, dtype=dt)
        self.ln2 = nn.LayerNorm(d, dtype=dt)
        self.qkv = nn.Linear(d, 3 * d, dtype=dt)
        self.proj = nn.Linear(d, d, dtype=dt)
        self.ff1 = nn.Linear(d, cfg.d_ff, dtype=dt)
        self.ff2 = nn.Linear(cfg.d_ff, d, dtype=dt)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)

        def heads(z):
            return z.view(b, t, self.n_heads, self.d_head).transpose(1, 2)

        q, k, v = heads(q), heads(k), heads(v)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.d_head)
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
        att = att.masked_fill(causal, NEG_INF)
        att = torch.softmax(att, dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.drop(self.proj(y))
        x = x + self.drop(self.ff2(torch.nn.functional.gelu(
            self.ff1(self.ln2(x)))))
        return x


class TransformerLM(nn.Module):
    """Causal transformer with tied input/output embeddings: the output
    logits are the last hidden states projected against the embedding
    table."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        dt = torch.float64
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model, dtype=dt)
        self.pos_emb = nn.Embedding(config.max_pos, config.d_model, dtype=dt)
        nn.init.normal_(self.tok_emb.weight, std=0.05)
        nn.init.normal_(self.pos_emb.weight, std=0.05)
        self.blocks = nn.ModuleList(_Block(config) for _ in range(config.n_layers))
        self.ln_f = nn.LayerNorm(config.d_model, dtype=dt)
        self.drop = nn.Dropout(config.dropout)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """tokens (B, T) long -> logits (B, T, |V|)."""
        if tokens.dim() == 1:
            tokens = tokens.unsqueeze(0)
        b, t = tokens.shape
        if t > self.config.max_pos:
            raise DimensionError(
                f"prefix length {t} exceeds max position {self.config.max_pos}")
        pos = torch.arange(t, dtype=torch.long)
        x = self.drop(self.tok_emb(tokens) + self.pos_emb(pos))
        for blk in self.blocks:
            x = blk(x)
        x = self.ln_f(x)
        return x @ self.tok_emb.weight.T

    # LogitScorer protocol
    def score(self, prefix: Sequence[int]) -> torch.Tensor:
        if len(prefix) == 0:
            raise ValueError("scorer needs a non-empty prefix")
        with torch.no_grad():
            logits = self.forward(torch.tensor(list(prefix), dtype=torch.long))
        return logits[0, -1]

    def score_batch(self, prefixes: Sequence[Sequence[int]]) -> torch.Tensor:
        """All prefixes must share a length (beam hypotheses do)."""
        with torch.no_grad():
            logits = self.forward(torch.tensor([list(p) for p in prefixes],
                                               dtype=torch.long))
        return logits[:, -1, :]


def forward_logits(model: TransformerLM, tokens: Sequence[int]) -> torch.Tensor:
    """Per-position logits for a single prefix: (T, |V|)."""
    return model.forward(torch.tensor(list(tokens), dtype=torch.long))[0]


def vp_states(response: list[int], vocab: Vocabulary) -> list[int]:
    """The pointer value in force when each response token is predicted.

    Starts at 0; flips to 1 after [RecS] is emitted and back to 0 after
    [RecE]. Raises on unbalanced or misnested markers.
    """
    states = []
    i_vp = 0
    for tok in response:
        states.append(i_vp)
        if tok == vocab.rec_start_id:
            if i_vp == 1:
                raise CorpusError("nested [RecS] in gold response")
            i_vp = 1
        elif tok == vocab.rec_end_id:
            if i_vp == 0:
                raise CorpusError("[RecE] without open [RecS] in gold response")
            i_vp = 0
    if i_vp == 1:
        raise CorpusError("unclosed [RecS] in gold response")
    return states


def apply_mask_and_bias(logits: torch.Tensor, i_vp: int, vocab: Vocabulary,
                        b_u: torch.Tensor | None,
                        mask_enabled: bool = True) -> torch.Tensor:
    """Add the knowledge bias to the item slice and the partition mask
    (0 on the allowed partition, -inf elsewhere). Works on (..., |V|)."""
    out = logits.clone()
    g = vocab.general_size
    if b_u is not None:
        out[..., g:] = out[..., g:] + b_u
    if mask_enabled:
        if i_vp == 0:
            out[..., g:] = NEG_INF
        else:
            out[..., :g] = NEG_INF
    return out


def gen_loss(model: TransformerLM, pair: ContextResponsePair,
             b_u: torch.Tensor | None, vocab: Vocabulary,
             mask_enabled: bool = True) -> torch.Tensor:
    """Teacher-forced negative log likelihood of the gold response under
    the pointer mask and knowledge bias, summed over response tokens.

    The input sequence is context + [SEP] + response; context tokens
    contribute no loss. Padding after [EOS] never enters the sequence.
    """
    response = list(pair.response)
    if vocab.eos_id in response:  # padding after [EOS] carries no loss
        response = response[:response.index(vocab.eos_id) + 1]
    states = vp_states(response, vocab)
    seq = list(pair.context) + [vocab.sep_id] + list(response)
    logits = model.forward(torch.tensor(seq, dtype=torch.long))[0]
    start = len(pair.context)  # position of [SEP], predicts response[0]
    g = vocab.general_size
    total = torch.zeros((), dtype=torch.float64)
    for i, (tok, i_vp) in enumerate(zip(response, states)):
        step = logits[start + i]
        step = apply_mask_and_bias(step, i_vp, vocab, b_u, mask_enabled)
        total = total - torch.log_softmax(step, dim=0)[tok]
    return total


def perplexity(model: TransformerLM, pairs: list[ContextResponsePair],
               vocab: Vocabulary, bias_fn=None,
               mask_enabled: bool = True) -> float:
    """exp(total masked NLL / total response token count). ``bias_fn``
    maps a pair to its b_u (None means no bias)."""
    if not pairs:
        raise ValueError("perplexity needs at least one pair")
    total_nll = 0.0
    total_tokens = 0
    with torch.no_grad():
        for pair in pairs:
            b_u = bias_fn(pair) if bias_fn is not None else None
            total_nll += float(gen_loss(model, pair, b_u, vocab,
                                        mask_enabled=mask_enabled))
            total_tokens += len(pair.response)
    return math.exp(total_nll / total_tokens)
