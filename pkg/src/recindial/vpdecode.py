"""Vocabulary-pointer constrained decoding.

The pointer is a binary automaton over the token stream: emitting [RecS]
switches generation to the item partition, [RecE] switches back. The mask
is additive (-inf on the disallowed partition) so disallowed tokens get
exactly zero probability after softmax. The probability vector over the
item partition is captured at the first token of each slot, which is where
top-k item extraction reads from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import torch

from .corpus import Vocabulary
from .errors import AutomatonError
from .seqmodel import NEG_INF, apply_mask_and_bias


def step_mask(i_vp: int, vocab: Vocabulary) -> torch.Tensor:
    """Additive mask over the full vocabulary: 0 on the partition allowed
    by the pointer, -inf on the other one."""
    mask = torch.zeros(vocab.size, dtype=torch.float64)
    if i_vp == 0:
        mask[vocab.general_size:] = NEG_INF
    else:
        mask[:vocab.general_size] = NEG_INF
    return mask


@dataclass
class GenerationState:
    i_vp: int = 0
    emitted: list[int] = field(default_factory=list)
    slot_distributions: list[tuple[int, torch.Tensor]] = field(default_factory=list)
    step: int = 0
    n_max: int = 64
    finished: bool = False
    unclosed_slot: bool = False  # hit n_max inside an open slot


def advance(state: GenerationState, token: int, vocab: Vocabulary,
            enforce: bool = True) -> GenerationState:
    """Apply one emission to the automaton. With ``enforce`` the token must
    come from the partition the pointer currently allows."""
    if enforce:
        is_item = vocab.is_item(token)
        if state.i_vp == 0 and is_item:
            raise AutomatonError(
                f"item-partition token {token} emitted while I_vp=0")
        if state.i_vp == 1 and not is_item:
            raise AutomatonError(
                f"general token {token} emitted while I_vp=1")
    i_vp = state.i_vp
    if token == vocab.rec_start_id:
        i_vp = 1
    elif token == vocab.rec_end_id:
        i_vp = 0
    new = replace(state,
                  i_vp=i_vp,
                  emitted=state.emitted + [token],
                  slot_distributions=list(state.slot_distributions),
                  step=state.step + 1)
    if token == vocab.eos_id:
        new.finished = True
    elif new.step >= new.n_max:
        new.finished = True
        if new.i_vp == 1:  # close the slot implicitly at the hard stop
            new.unclosed_slot = True
            new.i_vp = 0
    return new


@dataclass
class BeamHypothesis:
    state: GenerationState
    log_prob: float = 0.0

    @property
    def finished(self) -> bool:
        return self.state.finished

    def normalized_score(self, exponent: float = 1.0) -> float:
        n = max(1, len(self.state.emitted))
        return self.log_prob / (n ** exponent)


@dataclass
class RecommendationResult:
    response_tokens: list[int]
    response_text: str
    items: list[tuple[str, float]]
    state: GenerationState
    item_spans: list[dict] = field(default_factory=list)


def _step_distribution(logits: torch.Tensor, state: GenerationState,
                       vocab: Vocabulary, b_u: torch.Tensor | None,
                       mask_enabled: bool) -> torch.Tensor:
    return torch.log_softmax(
        apply_mask_and_bias(logits, state.i_vp, vocab, b_u, mask_enabled),
        dim=0)


def _maybe_capture_slot(state: GenerationState, log_probs: torch.Tensor,
                        vocab: Vocabulary) -> None:
    """At the step right after [RecS], record the distribution the model is
    sampling items from (restricted to V_R and renormalized, which is a
    no-op when the mask is on)."""
    if state.emitted and state.emitted[-1] == vocab.rec_start_id:
        probs = torch.exp(log_probs)
        slot = probs[vocab.general_size:]
        total = float(slot.sum())
        if total > 0:
            slot = slot / total
        state.slot_distributions.append((state.step, slot.clone()))


def extract_topk_items(state: GenerationState, k: int,
                       vocab: Vocabulary) -> list[tuple[str, float]]:
    """Top-k items from the first captured slot distribution, [RecE]
    excluded; ties broken by ascending token id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not state.slot_distributions:
        return []
    _, slot = state.slot_distributions[0]
    ranked = sorted(range(1, len(slot)),  # index 0 is [RecE]
                    key=lambda j: (-float(slot[j]), j))
    out = []
    for j in ranked[:k]:
        token_id = vocab.general_size + j
        item_id = vocab.token_to_item[token_id]
        out.append((item_id, float(slot[j])))
    return out


def render_response(tokens: list[int], vocab: Vocabulary
                    ) -> tuple[str, list[dict]]:
    """Detokenize, dropping [RecS]/[RecE]/[EOS]/[PAD]. Returns the text and
    the character spans of embedded item names."""
    skip = {vocab.rec_start_id, vocab.rec_end_id, vocab.eos_id, vocab.pad_id}
    parts: list[str] = []
    spans: list[dict] = []
    pos = 0
    for tid in tokens:
        if tid in skip:
            continue
        word = vocab.token_of(tid)
        if parts:
            pos += 1  # joining space
        start = pos
        parts.append(word)
        pos += len(word)
        if vocab.is_item(tid):
            spans.append({"item_id": vocab.token_to_item[tid], "name": word,
                          "char_start": start, "char_end": pos})
    return " ".join(parts), spans


def greedy_generate(context: list[int], scorer, b_u: torch.Tensor | None,
                    vocab: Vocabulary, n_max: int = 64, k: int = 10,
                    mask_enabled: bool = True) -> RecommendationResult:
    """Argmax decoding under the pointer mask and knowledge bias. The
    prefix fed to the scorer is context + [SEP] + emitted-so-far."""
    state = GenerationState(n_max=n_max)
    prefix = list(context) + [vocab.sep_id]
    while not state.finished:
        log_probs = _step_distribution(scorer.score(prefix + state.emitted),
                                       state, vocab, b_u, mask_enabled)
        _maybe_capture_slot(state, log_probs, vocab)
        token = int(torch.argmax(log_probs))
        state = advance(state, token, vocab, enforce=mask_enabled)
    # an [EOS]-only response is rendered empty
    tokens = state.emitted
    text, spans = render_response(tokens, vocab)
    items = extract_topk_items(state, k, vocab)
    return RecommendationResult(response_tokens=tokens, response_text=text,
                                items=items, state=state, item_spans=spans)


def beam_generate(context: list[int], scorer, b_u: torch.Tensor | None,
                  vocab: Vocabulary, width: int = 10, n_max: int = 64,
                  length_norm: float = 1.0,
                  mask_enabled: bool = True) -> list[BeamHypothesis]:
    """Beam expansion over masked, biased log probabilities, pointer state
    tracked per hypothesis. Finished hypotheses retire to a pool; the
    returned list is sorted by length-normalized score with deterministic
    lexicographic tie-breaking."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    base_prefix = list(context) + [vocab.sep_id]
    live = [BeamHypothesis(state=GenerationState(n_max=n_max))]
    pool: list[BeamHypothesis] = []
    while live:
        prefixes = [base_prefix + h.state.emitted for h in live]
        if hasattr(scorer, "score_batch"):
            logit_rows = scorer.score_batch(prefixes)
        else:
            logit_rows = torch.stack([scorer.score(p) for p in prefixes])
        candidates: list[tuple[float, list[int], BeamHypothesis, int, torch.Tensor]] = []
        for h, logits in zip(live, logit_rows):
            log_probs = _step_distribution(logits, h.state, vocab, b_u,
                                           mask_enabled)
            order = sorted(range(vocab.size),
                           key=lambda t: (-float(log_probs[t]), t))
            taken = 0
            for tok in order:
                lp = float(log_probs[tok])
                if lp == NEG_INF:
                    break
                candidates.append((h.log_prob + lp,
                                   h.state.emitted + [tok], h, tok, log_probs))
                taken += 1
                if taken >= width:
                    break
        candidates.sort(key=lambda c: (-c[0], c[1]))
        next_live: list[BeamHypothesis] = []
        for score, _tokens, h, tok, log_probs in candidates[:width]:
            state = GenerationState(i_vp=h.state.i_vp,
                                    emitted=list(h.state.emitted),
                                    slot_distributions=list(h.state.slot_distributions),
                                    step=h.state.step, n_max=n_max)
            _maybe_capture_slot(state, log_probs, vocab)
            state = advance(state, tok, vocab, enforce=mask_enabled)
            new = BeamHypothesis(state=state, log_prob=score)
            (pool if state.finished else next_live).append(new)
        live = next_live
    pool.sort(key=lambda h: (-h.normalized_score(length_norm),
                             h.state.emitted))
    return pool[:width]


def beam_recommend(context: list[int], scorer, b_u, vocab: Vocabulary,
                   width: int = 10, n_max: int = 64, k: int = 10,
                   length_norm: float = 1.0,
                   mask_enabled: bool = True) -> RecommendationResult:
    """Run beam search and package the best hypothesis as a
    recommendation result."""
    hyps = beam_generate(context, scorer, b_u, vocab, width=width,
                         n_max=n_max, length_norm=length_norm,
                         mask_enabled=mask_enabled)
    best = hyps[0]
    tokens = best.state.emitted
    text, spans = render_response(tokens, vocab)
    items = extract_topk_items(best.state, k, vocab)
    return RecommendationResult(response_tokens=tokens, response_text=text,
                                items=items, state=best.state,
                                item_spans=spans)
