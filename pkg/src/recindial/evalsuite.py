"""End-to-end evaluation: recommendation recall on the generated
responses, generation quality metrics and the bucketed recall analyses.

All metrics are pure folds over transcript-level instances, so a
generation run and its evaluation can live in different processes; the
contract between them is the line-delimited transcript format written by
``write_transcript``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field


@dataclass
class EvalInstance:
    pair_id: str
    generated_tokens: list[str]   # word-level tokens, items as single words
    generated_text: str
    items: list[tuple[str, float]]  # ranked (item id, probability)
    gold_items: list[str]
    reference_tokens: list[str] = field(default_factory=list)
    turn_index: int = 1
    mentioned_items: list[str] = field(default_factory=list)  # embedded in text


@dataclass
class MetricsReport:
    recall: dict[int, float]
    dist: dict[int, float]
    bleu: dict[int, float]
    rouge_l: float
    item_ratio: float
    ppl: float | None
    frequency_buckets: dict[str, dict]
    turn_buckets: dict[str, dict]
    n_instances: int
    n_recall_eligible: int

    def to_dict(self) -> dict:
        return {
            "recall": {f"recall@{k}": v for k, v in self.recall.items()},
            "dist": {f"dist@{n}": v for n, v in self.dist.items()},
            "bleu": {f"bleu@{n}": v for n, v in self.bleu.items()},
            "rouge_l": self.rouge_l,
            "item_ratio": self.item_ratio,
            "ppl": self.ppl,
            "frequency_buckets": self.frequency_buckets,
            "turn_buckets": self.turn_buckets,
            "n_instances": self.n_instances,
            "n_recall_eligible": self.n_recall_eligible,
        }

    def format_text(self) -> str:
        lines = ["== metrics report =="]
        for k in sorted(self.recall):
            lines.append(f"recall@{k:<3d} {self.recall[k]:.4f}")
        for n in sorted(self.dist):
            lines.append(f"dist@{n}     {self.dist[n]:.4f}")
        for n in sorted(self.bleu):
            lines.append(f"bleu@{n}     {self.bleu[n]:.4f}")
        lines.append(f"rouge_l    {self.rouge_l:.4f}")
        lines.append(f"item_ratio {self.item_ratio:.2f}%")
        if self.ppl is not None:
            lines.append(f"ppl        {self.ppl:.2f}")
        lines.append(f"instances  {self.n_instances} "
                     f"(recall-eligible {self.n_recall_eligible})")
        for label, table in (("frequency", self.frequency_buckets),
                             ("turn", self.turn_buckets)):
            lines.append(f"-- recall by {label} bucket --")
            for name, row in table.items():
                recs = " ".join(f"recall@{k}={v:.4f}"
                                for k, v in sorted(row["recall"].items()))
                lines.append(f"{name:>10s}  n={row['n']:<5d} {recs}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Recommendation metrics


def recall_at_k(instances: list[EvalInstance], k: int) -> float:
    """Hit iff any gold item appears among the instance's top-k extracted
    items; instances without gold items are not eligible. A response with
    no item slot is a miss no matter what the model ranked internally."""
    eligible = [inst for inst in instances if inst.gold_items]
    if not eligible:
        raise ValueError("no recall-eligible instances")
    hits = 0
    for inst in eligible:
        top = {item for item, _ in inst.items[:k]}
        if top & set(inst.gold_items):
            hits += 1
    return hits / len(eligible)


def item_ratio(instances: list[EvalInstance]) -> float:
    """Percentage of responses whose text embeds at least one item token
    (a captured slot distribution alone does not count)."""
    if not instances:
        raise ValueError("no instances")
    with_items = sum(1 for inst in instances if inst.mentioned_items)
    return 100.0 * with_items / len(instances)


def item_token_ratio(instances: list[EvalInstance],
                     item_ids: set[str]) -> float:
    """Alternative reading: item tokens over all generated tokens (not the
    default; kept behind this separate function)."""
    total = sum(len(inst.generated_tokens) for inst in instances)
    if total == 0:
        raise ValueError("no generated tokens")
    items = sum(1 for inst in instances for t in inst.generated_tokens
                if t in item_ids)
    return 100.0 * items / total


DEFAULT_FREQUENCY_EDGES = ((1, 5), (5, 10), (10, 100), (100, None))
DEFAULT_TURN_EDGES = ((1, 6), (6, 11), (11, None))


def _bucket_name(lo: int, hi: int | None) -> str:
    return f"[{lo},{hi})" if hi is not None else f"[{lo},inf)"


def bucket_recall(instances: list[EvalInstance],
                  mention_counts: dict[str, int],
                  by: str = "frequency",
                  ks: tuple[int, ...] = (30, 50),
                  edges: tuple | None = None) -> dict[str, dict]:
    """Recall per bucket. Frequency buckets group by the training-split
    mention count of the instance's rarest gold item; turn buckets group by
    the pair's turn index. Empty buckets are absent from the table."""
    if by not in ("frequency", "turn"):
        raise ValueError(f"unknown bucketing {by!r}")
    edges = edges or (DEFAULT_FREQUENCY_EDGES if by == "frequency"
                      else DEFAULT_TURN_EDGES)
    eligible = [inst for inst in instances if inst.gold_items]
    buckets: dict[str, list[EvalInstance]] = {}
    for inst in eligible:
        if by == "frequency":
            key_val = min(mention_counts.get(g, 0) for g in inst.gold_items)
        else:
            key_val = inst.turn_index
        for lo, hi in edges:
            if key_val >= lo and (hi is None or key_val < hi):
                buckets.setdefault(_bucket_name(lo, hi), []).append(inst)
                break
        else:
            buckets.setdefault("other", []).append(inst)
    table = {}
    for name in [_bucket_name(lo, hi) for lo, hi in edges] + ["other"]:
        group = buckets.get(name)
        if not group:
            continue
        table[name] = {"n": len(group),
                       "recall": {k: recall_at_k(group, k) for k in ks}}
    return table


# ---------------------------------------------------------------------------
# Generation metrics


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def distinct_n(responses: list[list[str]], n: int) -> float:
    """Sentence level: per response, distinct n-grams over token count;
    corpus value is the mean. Responses shorter than n contribute 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not responses:
        raise ValueError("no responses")
    vals = []
    for tokens in responses:
        if not tokens:
            vals.append(0.0)
            continue
        vals.append(len(set(_ngrams(tokens, n))) / len(tokens))
    return sum(vals) / len(vals)


BLEU_SMOOTH_EPS = 1e-9  # floor on zero n-gram precisions


def bleu_n(hypothesis: list[str], references: list[list[str]], n: int) -> float:
    """Geometric mean of modified 1..n-gram precisions with brevity
    penalty. Zero precisions are floored at BLEU_SMOOTH_EPS so short
    responses score near zero instead of exactly zero."""
    if not hypothesis:
        return 0.0
    log_sum = 0.0
    for order in range(1, n + 1):
        hyp_counts = Counter(_ngrams(hypothesis, order))
        if not hyp_counts:
            log_sum += math.log(BLEU_SMOOTH_EPS)
            continue
        max_ref = Counter()
        for ref in references:
            for g, c in Counter(_ngrams(ref, order)).items():
                max_ref[g] = max(max_ref[g], c)
        clipped = sum(min(c, max_ref.get(g, 0)) for g, c in hyp_counts.items())
        precision = clipped / sum(hyp_counts.values())
        log_sum += math.log(max(precision, BLEU_SMOOTH_EPS))
    ref_len = min((len(r) for r in references),
                  key=lambda L: (abs(L - len(hypothesis)), L))
    bp = 1.0 if len(hypothesis) >= ref_len else math.exp(1 - ref_len / max(1, len(hypothesis)))
    return bp * math.exp(log_sum / n)


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: list[str], reference: list[str],
            beta: float = 1.2) -> float:
    """LCS-based F-measure; tokens are compared lowercased."""
    hyp = [t.lower() for t in hypothesis]
    ref = [t.lower() for t in reference]
    if not hyp or not ref:
        return 0.0
    lcs = _lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    return (1 + beta * beta) * p * r / (r + beta * beta * p)


# ---------------------------------------------------------------------------
# Report assembly and transcript IO


def build_report(instances: list[EvalInstance],
                 mention_counts: dict[str, int] | None = None,
                 ppl: float | None = None,
                 recall_ks: tuple[int, ...] = (1, 10, 50),
                 bucket_ks: tuple[int, ...] = (30, 50)) -> MetricsReport:
    responses = [inst.generated_tokens for inst in instances]
    bleu_vals = {}
    rouge_vals = []
    scored = [inst for inst in instances if inst.reference_tokens]
    for n in (2, 4):
        if scored:
            bleu_vals[n] = sum(bleu_n(i.generated_tokens,
                                      [i.reference_tokens], n)
                               for i in scored) / len(scored)
        else:
            bleu_vals[n] = 0.0
    for inst in scored:
        rouge_vals.append(rouge_l(inst.generated_tokens, inst.reference_tokens))
    has_eligible = any(inst.gold_items for inst in instances)
    counts = mention_counts or {}
    return MetricsReport(
        recall={k: (recall_at_k(instances, k) if has_eligible else 0.0)
                for k in recall_ks},
        dist={n: distinct_n(responses, n) for n in (2, 3, 4)},
        bleu=bleu_vals,
        rouge_l=(sum(rouge_vals) / len(rouge_vals)) if rouge_vals else 0.0,
        item_ratio=item_ratio(instances),
        ppl=ppl,
        frequency_buckets=(bucket_recall(instances, counts, "frequency",
                                         bucket_ks) if has_eligible else {}),
        turn_buckets=(bucket_recall(instances, counts, "turn", bucket_ks)
                      if has_eligible else {}),
        n_instances=len(instances),
        n_recall_eligible=sum(1 for i in instances if i.gold_items),
    )


def write_transcript(path, instances: list[dict], meta: dict | None = None) -> None:
    """Line-delimited records {pair_id, generated_text, generated_tokens,
    items, gold_items, ...}; an optional meta record leads the file."""
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}) + "\n")
        for rec in instances:
            fh.write(json.dumps(rec) + "\n")


def read_transcript(path) -> tuple[list[dict], dict]:
    records: list[dict] = []
    meta: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "meta" in rec and "pair_id" not in rec:
                meta = rec["meta"]
            else:
                records.append(rec)
    return records, meta


def instances_from_transcript(records: list[dict],
                              gold: dict[str, dict] | None = None
                              ) -> list[EvalInstance]:
    """Join transcript records with an optional gold table keyed by
    pair_id carrying reference_tokens/turn_index."""
    out = []
    for rec in records:
        extra = (gold or {}).get(rec["pair_id"], {})
        out.append(EvalInstance(
            pair_id=rec["pair_id"],
            generated_tokens=rec.get("generated_tokens", []),
            generated_text=rec.get("generated_text", ""),
            items=[(str(i), float(p)) for i, p in rec.get("items", [])],
            gold_items=[str(g) for g in rec.get("gold_items", [])],
            reference_tokens=extra.get("reference_tokens",
                                       rec.get("reference_tokens", [])),
            turn_index=extra.get("turn_index", rec.get("turn_index", 1)),
            mentioned_items=[str(m) for m in rec.get("mentioned_items", [])],
        ))
    return out
