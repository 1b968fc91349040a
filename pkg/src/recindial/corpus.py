"""Dialogue corpus ingestion, vocabulary partitioning and pair construction.

Two raw formats are supported:

* ReDial: line-delimited JSON, one conversation per line, with a
  ``messages`` list and a ``movieMentions`` map; ``@<id>`` markers in the
  message text denote item mentions.
* Normalized: line-delimited JSON, one dialogue per line:
  ``{id, turns: [{speaker, text, items: [{surface, item_id, char_start,
  char_end}]}]}``.

Both are parsed into text-level ``RawDialogue`` records, then encoded
against a partitioned :class:`Vocabulary` (general tokens first, item
tokens in a contiguous block at the end).
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace

from .errors import CorpusError, VocabularyError

PAD = "[PAD]"
EOS = "[EOS]"
SEP = "[SEP]"
REC_START = "[RecS]"
REC_END = "[RecE]"

# Reserved general-partition tokens, prepended unless already present in
# the caller's base token list.
RESERVED_GENERAL = (PAD, EOS, SEP, REC_START)

_WORD_RE = re.compile(r"[a-z0-9']+|[^\sa-z0-9']")
_MENTION_RE = re.compile(r"@(\d+)")


def tokenize(text: str) -> list[str]:
    """Lowercase word/punctuation tokenization. Item names never pass
    through here; they stay single tokens."""
    return _WORD_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# Vocabulary


@dataclass
class Vocabulary:
    """Token space split into a general partition V_G (ids
    ``[0, general_size)``) and an item partition V_R (the remaining ids,
    ``[RecE]`` first, then one token per catalog item)."""

    tokens: list[str]
    general_size: int
    item_to_token: dict[str, int]

    def __post_init__(self):
        self._token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self._token_to_id) != len(self.tokens):
            raise VocabularyError("duplicate token strings in vocabulary")
        self.token_to_item = {v: k for k, v in self.item_to_token.items()}

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def item_size(self) -> int:
        return self.size - self.general_size

    @property
    def pad_id(self) -> int:
        return self._token_to_id[PAD]

    @property
    def eos_id(self) -> int:
        return self._token_to_id[EOS]

    @property
    def sep_id(self) -> int:
        return self._token_to_id[SEP]

    @property
    def rec_start_id(self) -> int:
        return self._token_to_id[REC_START]

    @property
    def rec_end_id(self) -> int:
        return self.general_size

    def id_of(self, token: str) -> int | None:
        return self._token_to_id.get(token)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def is_item(self, token_id: int) -> bool:
        return token_id >= self.general_size

    def item_ids(self) -> list[str]:
        return list(self.item_to_token)

    def save(self, path) -> None:
        """One token per line; item-partition lines carry the catalog item
        id after a tab."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#items_start={self.general_size}\n")
            for i, tok in enumerate(self.tokens):
                item_id = self.token_to_item.get(i)
                if item_id is not None:
                    fh.write(f"{tok}\t{item_id}\n")
                else:
                    fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("#items_start="):
                raise VocabularyError(f"bad vocabulary header: {header!r}")
            general_size = int(header.split("=", 1)[1])
            tokens: list[str] = []
            item_to_token: dict[str, int] = {}
            for line in fh:
                line = line.rstrip("\n")
                if "\t" in line:
                    tok, item_id = line.split("\t", 1)
                    item_to_token[item_id] = len(tokens)
                    tokens.append(tok)
                else:
                    tokens.append(line)
        return cls(tokens=tokens, general_size=general_size,
                   item_to_token=item_to_token)


def build_vocabulary(item_catalog: list[str], base_tokens: list[str],
                     item_names: dict[str, str] | None = None) -> Vocabulary:
    """Build the partitioned vocabulary.

    ``base_tokens`` is the ordered general token list; the reserved tokens
    ([PAD], [EOS], [SEP], [RecS]) are prepended unless the caller already
    placed them. Item token ids are contiguous and follow all general ids:
    [RecE] first, then one token per catalog item (its display name when
    given, else the raw id).
    """
    if len(set(item_catalog)) != len(item_catalog):
        raise VocabularyError("duplicate item id in catalog")
    general: list[str] = []
    seen: set[str] = set()
    for tok in RESERVED_GENERAL:
        if tok not in base_tokens and tok not in seen:
            general.append(tok)
            seen.add(tok)
    for tok in base_tokens:
        if tok in (REC_END,):
            raise VocabularyError(f"{REC_END} cannot appear in base tokens")
        if tok not in seen:
            general.append(tok)
            seen.add(tok)
    tokens = list(general)
    general_size = len(tokens)
    tokens.append(REC_END)
    item_names = item_names or {}
    item_to_token: dict[str, int] = {}
    for item_id in item_catalog:
        name = item_names.get(item_id, str(item_id))
        if name in seen or name == REC_END:
            name = f"{name} #{item_id}"
        seen.add(name)
        item_to_token[str(item_id)] = len(tokens)
        tokens.append(name)
    return Vocabulary(tokens=tokens, general_size=general_size,
                      item_to_token=item_to_token)


# ---------------------------------------------------------------------------
# Raw (text-level) dialogues


@dataclass
class RawTurn:
    speaker: str  # "seeker" | "recommender"
    tokens: list[str]
    item_positions: list[tuple[int, str]]  # (token index, item id)
    raw_text: str


@dataclass
class RawDialogue:
    id: str
    turns: list[RawTurn]


def _split_mentions(text: str, movie_map: dict[str, str],
                    warnings: list[str]) -> tuple[list[str], list[tuple[int, str]]]:
    tokens: list[str] = []
    positions: list[tuple[int, str]] = []
    cursor = 0
    for m in _MENTION_RE.finditer(text):
        tokens.extend(tokenize(text[cursor:m.start()]))
        item_id = m.group(1)
        if item_id in movie_map:
            positions.append((len(tokens), item_id))
            tokens.append(f"@{item_id}")  # placeholder, resolved at encode time
        else:
            warnings.append(f"unknown item mention @{item_id}")
            tokens.extend(tokenize(m.group(0)))
        cursor = m.end()
    tokens.extend(tokenize(text[cursor:]))
    return tokens, positions


def parse_redial(path) -> tuple[list[RawDialogue], dict[str, str], list[str]]:
    """Parse a ReDial-format file.

    Returns (dialogues, catalog item_id -> display name, warnings).
    Unknown mention ids degrade to plain text and are recorded as warnings.
    """
    dialogues: list[RawDialogue] = []
    catalog: dict[str, str] = {}
    warnings: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                conv_id = str(rec["conversationId"])
                initiator = rec["initiatorWorkerId"]
                movie_map = {str(k): v for k, v in
                             (rec.get("movieMentions") or {}).items()}
                messages = rec["messages"]
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}: malformed record at line {lineno}: {exc}")
            catalog.update(movie_map)
            turns: list[RawTurn] = []
            for msg in messages:
                text = msg.get("text", "")
                speaker = ("seeker" if msg["senderWorkerId"] == initiator
                           else "recommender")
                tokens, positions = _split_mentions(text, movie_map, warnings)
                turns.append(RawTurn(speaker=speaker, tokens=tokens,
                                     item_positions=positions, raw_text=text))
            if turns:
                dialogues.append(RawDialogue(id=conv_id, turns=turns))
    return dialogues, catalog, warnings


def parse_normalized(path) -> tuple[list[RawDialogue], dict[str, str], list[str]]:
    """Parse the normalized line-delimited format (the canonical test
    fixture format)."""
    dialogues: list[RawDialogue] = []
    catalog: dict[str, str] = {}
    warnings: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                turns_in = rec["turns"]
                did = str(rec["id"])
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}: malformed record at line {lineno}: {exc}")
            turns: list[RawTurn] = []
            for t in turns_in:
                text = t["text"]
                items = sorted(t.get("items", []), key=lambda x: x["char_start"])
                tokens: list[str] = []
                positions: list[tuple[int, str]] = []
                cursor = 0
                for it in items:
                    s, e = it["char_start"], it["char_end"]
                    if s < cursor:
                        raise CorpusError(
                            f"{path}: overlapping item spans at line {lineno}")
                    tokens.extend(tokenize(text[cursor:s]))
                    item_id = str(it["item_id"])
                    catalog.setdefault(item_id, it.get("surface", item_id))
                    positions.append((len(tokens), item_id))
                    tokens.append(f"@{item_id}")
                    cursor = e
                tokens.extend(tokenize(text[cursor:]))
                turns.append(RawTurn(speaker=t["speaker"], tokens=tokens,
                                     item_positions=positions, raw_text=text))
            dialogues.append(RawDialogue(id=did, turns=turns))
    return dialogues, catalog, warnings


def collect_base_tokens(raw_dialogues: list[RawDialogue]) -> list[str]:
    """Ordered set of word tokens appearing in the corpus (item
    placeholders excluded)."""
    seen: set[str] = set()
    out: list[str] = []
    for d in raw_dialogues:
        for t in d.turns:
            item_pos = {p for p, _ in t.item_positions}
            for i, tok in enumerate(t.tokens):
                if i in item_pos:
                    continue
                if tok not in seen:
                    seen.add(tok)
                    out.append(tok)
    return out


# ---------------------------------------------------------------------------
# Encoded dialogues


@dataclass
class Utterance:
    speaker: str
    tokens: list[int]
    item_spans: list[tuple[int, str]]  # (token position, item id)
    raw_text: str


@dataclass
class Dialogue:
    id: str
    utterances: list[Utterance]

    @property
    def m(self) -> int:
        return len(self.utterances)


def encode_dialogue(raw: RawDialogue, vocab: Vocabulary,
                    unknown: str = "drop") -> Dialogue:
    """Map token strings to ids. Item placeholders become their single
    item token. ``unknown`` is 'drop' or 'error' for out-of-vocabulary
    words."""
    utterances = []
    for t in raw.turns:
        item_at = dict(t.item_positions)
        ids: list[int] = []
        spans: list[tuple[int, str]] = []
        for i, tok in enumerate(t.tokens):
            if i in item_at:
                item_id = item_at[i]
                tid = vocab.item_to_token.get(item_id)
                if tid is None:
                    raise VocabularyError(f"item {item_id} not in vocabulary")
                spans.append((len(ids), item_id))
                ids.append(tid)
            else:
                tid = vocab.id_of(tok)
                if tid is None:
                    if unknown == "error":
                        raise VocabularyError(f"unknown token {tok!r}")
                    continue
                ids.append(tid)
        utterances.append(Utterance(speaker=t.speaker, tokens=ids,
                                    item_spans=spans, raw_text=t.raw_text))
    return Dialogue(id=raw.id, utterances=utterances)


def load_redial(path, vocab: Vocabulary | None = None
                ) -> tuple[list[Dialogue], Vocabulary, dict[str, str]]:
    """Load a ReDial-format file end to end.

    When ``vocab`` is None it is built from the file's own word types and
    item catalog. Returns (dialogues, vocab, catalog).
    """
    raw, catalog, _warnings = parse_redial(path)
    if vocab is None:
        vocab = build_vocabulary(sorted(catalog), collect_base_tokens(raw),
                                 item_names=catalog)
    return [encode_dialogue(d, vocab) for d in raw], vocab, catalog


def load_normalized(path, vocab: Vocabulary | None = None
                    ) -> tuple[list[Dialogue], Vocabulary, dict[str, str]]:
    raw, catalog, _warnings = parse_normalized(path)
    if vocab is None:
        vocab = build_vocabulary(sorted(catalog), collect_base_tokens(raw),
                                 item_names=catalog)
    return [encode_dialogue(d, vocab) for d in raw], vocab, catalog


# ---------------------------------------------------------------------------
# Item marking and pair construction


def mark_items(dialogue: Dialogue, vocab: Vocabulary) -> Dialogue:
    """Wrap each item token w as [RecS] w [RecE]; other tokens unchanged.
    Item spans are re-pointed at the item token's new position."""
    marked = []
    for utt in dialogue.utterances:
        span_at = dict(utt.item_spans)
        ids: list[int] = []
        spans: list[tuple[int, str]] = []
        for i, tid in enumerate(utt.tokens):
            if i in span_at:
                if not vocab.is_item(tid) or tid == vocab.rec_end_id:
                    raise VocabularyError(
                        f"item span points at non-item token id {tid}")
                ids.append(vocab.rec_start_id)
                spans.append((len(ids), span_at[i]))
                ids.append(tid)
                ids.append(vocab.rec_end_id)
            else:
                ids.append(tid)
        marked.append(replace(utt, tokens=ids, item_spans=spans))
    return Dialogue(id=dialogue.id, utterances=marked)


@dataclass
class ContextResponsePair:
    dialogue_id: str
    pair_id: str
    context: list[int]
    response: list[int]
    gold_items: list[str]
    entity_set: list[str]  # entity ids, order of first appearance
    turn_index: int
    response_text: str = ""
    reference_tokens: list[str] = field(default_factory=list)


def build_pairs(dialogues: list[Dialogue], link_map: dict[str, str],
                vocab: Vocabulary, n_ctx: int = 256
                ) -> list[ContextResponsePair]:
    """One pair per recommender utterance: context is all preceding
    utterances joined with [SEP] (left-truncated to ``n_ctx`` tokens),
    response is the utterance plus [EOS]. The user entity set collects
    entities linked from context item mentions, deduplicated in order of
    first appearance."""
    pairs: list[ContextResponsePair] = []
    for dlg in dialogues:
        for j, utt in enumerate(dlg.utterances):
            if utt.speaker != "recommender":
                continue
            context: list[int] = []
            entity_set: list[str] = []
            seen_entities: set[str] = set()
            for prev in dlg.utterances[:j]:
                if context:
                    context.append(vocab.sep_id)
                context.extend(prev.tokens)
                for _, item_id in prev.item_spans:
                    ent = link_map.get(item_id)
                    if ent is not None and ent not in seen_entities:
                        seen_entities.add(ent)
                        entity_set.append(ent)
            if len(context) > n_ctx:
                context = context[-n_ctx:]
            gold_items = [item_id for _, item_id in utt.item_spans]
            pairs.append(ContextResponsePair(
                dialogue_id=dlg.id,
                pair_id=f"{dlg.id}:{j}",
                context=context,
                response=utt.tokens + [vocab.eos_id],
                gold_items=gold_items,
                entity_set=entity_set,
                turn_index=j + 1,
                response_text=utt.raw_text,
            ))
    return pairs


def split_dataset(pairs: list[ContextResponsePair], seed: int
                  ) -> tuple[list[ContextResponsePair], ...]:
    """Dialogue-level 80/10/10 split, deterministic under seed. No
    dialogue straddles splits."""
    by_dialogue: dict[str, list[ContextResponsePair]] = {}
    order: list[str] = []
    for p in pairs:
        if p.dialogue_id not in by_dialogue:
            by_dialogue[p.dialogue_id] = []
            order.append(p.dialogue_id)
        by_dialogue[p.dialogue_id].append(p)
    if len(order) < 10:
        raise CorpusError(
            f"need at least 10 dialogues to split, got {len(order)}")
    rng = random.Random(seed)
    shuffled = list(order)
    rng.shuffle(shuffled)
    n = len(shuffled)
    n_valid = n // 10
    n_test = n // 10
    test_ids = shuffled[:n_test]
    valid_ids = shuffled[n_test:n_test + n_valid]
    train_ids = shuffled[n_test + n_valid:]

    def gather(ids):
        return [p for d in ids for p in by_dialogue[d]]

    return gather(train_ids), gather(valid_ids), gather(test_ids)


def load_link_map(path) -> dict[str, str]:
    """JSON object item_id -> entity_id."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {str(k): str(v) for k, v in data.items()}


def response_words(tokens: list[int], vocab: Vocabulary) -> list[str]:
    """Word-level view of a token sequence for the text metrics: marker
    and special tokens dropped, items kept as single words."""
    skip = {vocab.rec_start_id, vocab.rec_end_id, vocab.eos_id,
            vocab.pad_id, vocab.sep_id}
    return [vocab.token_of(t) for t in tokens if t not in skip]


def save_pairs(path, pairs: list[ContextResponsePair],
               vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "pair_id": p.pair_id,
                "dialogue_id": p.dialogue_id,
                "context": p.context,
                "response": p.response,
                "gold_items": p.gold_items,
                "entity_set": p.entity_set,
                "turn_index": p.turn_index,
                "response_text": p.response_text,
                "reference_tokens": response_words(p.response, vocab),
            }) + "\n")


def load_pairs(path) -> list[ContextResponsePair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            p = ContextResponsePair(
                dialogue_id=rec["dialogue_id"],
                pair_id=rec["pair_id"],
                context=rec["context"],
                response=rec["response"],
                gold_items=rec["gold_items"],
                entity_set=rec["entity_set"],
                turn_index=rec["turn_index"],
                response_text=rec.get("response_text", ""),
            )
            p.reference_tokens = rec.get("reference_tokens", [])
            pairs.append(p)
    return pairs


def mention_counts(pairs: list[ContextResponsePair]) -> dict[str, int]:
    """Training-split gold-item mention counts, used by the bucketed
    recall analysis."""
    counts: dict[str, int] = {}
    for p in pairs:
        for item in p.gold_items:
            counts[item] = counts.get(item, 0) + 1
    return counts
