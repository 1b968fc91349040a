"""Inference engine and chat sessions over a frozen checkpoint."""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import torch

from .corpus import Utterance, Vocabulary, tokenize
from .errors import SessionNotFoundError
from .kgraph import knowledge_bias, rgcn_forward
from .training import Checkpoint
from .vpdecode import RecommendationResult, beam_recommend


@dataclass
class DecodeConfig:
    beam_width: int = 10
    n_max: int = 64
    topk: int = 10


@dataclass
class Session:
    id: str
    history: list[Utterance] = field(default_factory=list)
    entity_set: list[str] = field(default_factory=list)
    created: float = field(default_factory=time.time)
    last_active: float = field(default_factory=time.time)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    turn_index: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass
class ChatTurn:
    user_text: str
    response_text: str
    items: list[dict]  # {id, name, prob}
    item_spans: list[dict]
    latency_ms: float
    turn_index: int


class ChatEngine:
    """Runs the full inference path per user message: item mention
    detection, entity-set update, knowledge bias, constrained beam
    generation and top-k extraction. Inference over the frozen model is
    funneled through a single lock (the bounded-worker contract)."""

    def __init__(self, ckpt: Checkpoint, decode: DecodeConfig | None = None,
                 context_budget: int = 256):
        self.ckpt = ckpt
        self.vocab: Vocabulary = ckpt.vocab
        self.decode = decode or DecodeConfig()
        self.context_budget = context_budget
        self.use_vp = ckpt.train_config.use_vp
        self.use_kg = ckpt.train_config.use_kg
        self._infer_lock = threading.Lock()
        with torch.no_grad():
            self.H = rgcn_forward(ckpt.kg, ckpt.kg_params)
        # longest-name-first surface matcher for live mention detection
        self._surfaces = sorted(
            ((name.lower(), item_id)
             for item_id, name in self._item_names().items()),
            key=lambda s: -len(s[0]))

    def _item_names(self) -> dict[str, str]:
        if self.ckpt.item_names:
            return self.ckpt.item_names
        return {item_id: self.vocab.token_of(tid)
                for item_id, tid in self.vocab.item_to_token.items()}

    def item_name(self, item_id: str) -> str:
        return self._item_names().get(item_id, item_id)

    def detect_items(self, text: str) -> list[tuple[int, int, str]]:
        """Exact surface-form matches (char_start, char_end, item_id),
        longest name first, non-overlapping."""
        low = text.lower()
        taken: list[tuple[int, int, str]] = []

        def overlaps(s, e):
            return any(not (e <= ts or s >= te) for ts, te, _ in taken)

        for surface, item_id in self._surfaces:
            start = 0
            while True:
                i = low.find(surface, start)
                if i < 0:
                    break
                if not overlaps(i, i + len(surface)):
                    taken.append((i, i + len(surface), item_id))
                start = i + 1
        return sorted(taken)

    def encode_user_text(self, text: str) -> Utterance:
        """Tokenize a live message; detected item mentions become marked
        single tokens, unknown words are dropped."""
        matches = self.detect_items(text)
        ids: list[int] = []
        spans: list[tuple[int, str]] = []
        cursor = 0
        v = self.vocab
        for (s, e, item_id) in matches:
            for w in tokenize(text[cursor:s]):
                tid = v.id_of(w)
                if tid is not None and not v.is_item(tid):
                    ids.append(tid)
            ids.append(v.rec_start_id)
            spans.append((len(ids), item_id))
            ids.append(v.item_to_token[item_id])
            ids.append(v.rec_end_id)
            cursor = e
        for w in tokenize(text[cursor:]):
            tid = v.id_of(w)
            if tid is not None and not v.is_item(tid):
                ids.append(tid)
        return Utterance(speaker="seeker", tokens=ids, item_spans=spans,
                         raw_text=text)

    def bias_for(self, entity_set: list[str]) -> torch.Tensor | None:
        if not self.use_kg:
            return None
        idx = [self.ckpt.kg.entity_index[e] for e in entity_set
               if e in self.ckpt.kg.entity_index]
        if not idx:
            return None
        with torch.no_grad():
            return knowledge_bias(idx, self.H, self.ckpt.kg_params)

    def recommend(self, context: list[int], entity_set: list[str],
                  decode: DecodeConfig | None = None) -> RecommendationResult:
        d = decode or self.decode
        b_u = self.bias_for(entity_set)
        with self._infer_lock:
            return beam_recommend(context, self.ckpt.model, b_u, self.vocab,
                                  width=d.beam_width, n_max=d.n_max,
                                  k=d.topk, mask_enabled=self.use_vp)


class SessionStore:
    def __init__(self, ttl_seconds: float = 1800.0):
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, decode: DecodeConfig | None = None) -> Session:
        session = Session(id=uuid.uuid4().hex,
                          decode=decode or DecodeConfig())
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._expire()
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFoundError(f"unknown session {session_id}")
        return session

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise SessionNotFoundError(f"unknown session {session_id}")
            del self._sessions[session_id]

    def _expire(self) -> None:
        now = time.time()
        dead = [sid for sid, s in self._sessions.items()
                if now - s.last_active > self.ttl]
        for sid in dead:
            del self._sessions[sid]


def handle_message(engine: ChatEngine, session: Session, text: str,
                   k: int | None = None) -> ChatTurn:
    """One chat turn: append the seeker utterance, grow the entity set,
    generate the recommender reply and return it with top-k items."""
    t0 = time.perf_counter()
    with session.lock:
        session.last_active = time.time()
        utt = engine.encode_user_text(text)
        session.history.append(utt)
        for _, item_id in utt.item_spans:
            ent = engine.ckpt.link_map.get(item_id)
            if ent is not None and ent not in session.entity_set:
                session.entity_set.append(ent)
        context: list[int] = []
        for u in session.history:
            if context:
                context.append(engine.vocab.sep_id)
            context.extend(u.tokens)
        if len(context) > engine.context_budget:  # oldest turns truncated
            context = context[-engine.context_budget:]
        decode = session.decode if k is None else DecodeConfig(
            beam_width=session.decode.beam_width,
            n_max=session.decode.n_max, topk=k)
        result = engine.recommend(context, session.entity_set, decode)
        reply_spans = [(i, engine.vocab.token_to_item[t])
                       for i, t in enumerate(result.response_tokens)
                       if engine.vocab.is_item(t)
                       and t != engine.vocab.rec_end_id]
        session.history.append(Utterance(
            speaker="recommender", tokens=result.response_tokens,
            item_spans=reply_spans, raw_text=result.response_text))
        session.turn_index += 1
        items = [{"id": item_id, "name": engine.item_name(item_id),
                  "prob": prob} for item_id, prob in result.items]
        return ChatTurn(user_text=text,
                        response_text=result.response_text,
                        items=items,
                        item_spans=result.item_spans,
                        latency_ms=1000 * (time.perf_counter() - t0),
                        turn_index=session.turn_index)
