"""Deterministic toy corpus generator.

Produces a ReDial-format dialogue file, a link map and a triples file
where the gold recommendation is a fixed function of the item the seeker
mentions: mention item a, get item (a + offset) mod n_items. The knowledge
graph mirrors the rule (a "paired_with" edge from each item entity to its
partner, plus genre edges), so the graph-side path can learn the mapping
directly from the context entity set.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

SEEKER_TEMPLATES = [
    "i watched {item} last night and thought it was {adj}",
    "my favorite movie is {item} what should i see next",
    "i really enjoyed {item} can you suggest something {adj}",
    "looking for something like {item} please",
    "hello i am a big fan of {item}",
    "me and my {noun} saw {item} and found it {adj}",
    "after a long {noun} i put on {item} and it felt {adj}",
]

RECOMMENDER_TEMPLATES = [
    "have you seen {item} ?",
    "you should watch {item} it is {adj}",
    "i think you would like {item}",
    "try {item} it is a {adj} pick",
    "my {noun} keeps recommending {item} to everyone",
]

# filler pools; they exist to keep the general vocabulary from collapsing
# to a handful of template words
ADJECTIVES = [
    "amazing", "gripping", "tense", "funny", "haunting", "charming",
    "bleak", "sweet", "odd", "slow", "loud", "quiet", "sharp", "warm",
    "cold", "clever", "daring", "gentle", "grim", "jolly", "moody",
    "noble", "plain", "quick", "rough", "shiny", "stern", "tender",
    "vivid", "weird", "wild", "brave", "calm", "dull", "eager", "fair",
    "huge", "keen", "lame", "neat", "pale", "rare", "safe", "tame",
    "ugly", "vast", "wise", "young", "zesty", "broad",
]

NOUNS = [
    "roommate", "sister", "brother", "neighbor", "coworker", "cousin",
    "barber", "dentist", "teacher", "uncle", "aunt", "friend", "boss",
    "nephew", "niece", "landlord", "mailman", "plumber", "grandma",
    "grandpa", "shift", "week", "commute", "meeting", "workout",
]

CLOSING_SEEKER = ["thanks i will check it out", "great thank you so much"]
CLOSING_RECOMMENDER = ["enjoy the movie have a good day",
                       "you are welcome goodbye"]


def item_id_of(i: int) -> str:
    return str(100 + i)


def item_name_of(i: int) -> str:
    return f"Film {i:02d} ({1980 + i})"


def entity_of(i: int) -> str:
    return f"E{i}"


def recommended_item(i: int, n_items: int, offset: int = 7) -> int:
    return (i + offset) % n_items


def generate_toy_corpus(out_dir, n_dialogues: int = 600, n_items: int = 20,
                        n_genres: int = 20, seed: int = 13,
                        offset: int = 7) -> dict[str, Path]:
    """Write corpus.jsonl (ReDial format), link_map.json and triples.tsv
    under ``out_dir``; returns the three paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    corpus_path = out / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for d in range(n_dialogues):
            a = rng.randrange(n_items)
            b = recommended_item(a, n_items, offset)
            mentions = {item_id_of(a): item_name_of(a),
                        item_id_of(b): item_name_of(b)}
            def fill(template, item):
                return template.format(item=f"@{item_id_of(item)}",
                                       adj=rng.choice(ADJECTIVES),
                                       noun=rng.choice(NOUNS))

            messages = [
                {"text": fill(rng.choice(SEEKER_TEMPLATES), a),
                 "senderWorkerId": 1},
                {"text": fill(rng.choice(RECOMMENDER_TEMPLATES), b),
                 "senderWorkerId": 2},
            ]
            if rng.random() < 0.3:
                messages.append({"text": rng.choice(CLOSING_SEEKER),
                                 "senderWorkerId": 1})
                messages.append({"text": rng.choice(CLOSING_RECOMMENDER),
                                 "senderWorkerId": 2})
            fh.write(json.dumps({
                "conversationId": f"toy{d:05d}",
                "initiatorWorkerId": 1,
                "respondentWorkerId": 2,
                "movieMentions": mentions,
                "messages": messages,
            }) + "\n")

    link_map = {item_id_of(i): entity_of(i) for i in range(n_items)}
    link_path = out / "link_map.json"
    with open(link_path, "w", encoding="utf-8") as fh:
        json.dump(link_map, fh, indent=1)

    triples_path = out / "triples.tsv"
    with open(triples_path, "w", encoding="utf-8") as fh:
        for i in range(n_items):
            j = recommended_item(i, n_items, offset)
            fh.write(f"{entity_of(i)}\tpaired_with\t{entity_of(j)}\n")
            fh.write(f"{entity_of(i)}\thas_genre\tG{i % n_genres}\n")
    return {"corpus": corpus_path, "link_map": link_path,
            "triples": triples_path}
