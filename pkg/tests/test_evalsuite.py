import itertools
import math
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recindial.evalsuite import (BLEU_SMOOTH_EPS, EvalInstance, bleu_n,
                                 bucket_recall, build_report, distinct_n,
                                 instances_from_transcript, item_ratio,
                                 item_token_ratio, read_transcript,
                                 recall_at_k, rouge_l, write_transcript)

ALPHABET = ("a", "b", "c")


def inst(pair_id="p", items=(), gold=(), tokens=(), ref=(), turn=1,
         mentioned=None):
    # by default a response is assumed to embed the items it extracted
    if mentioned is None:
        mentioned = [i for i, _ in items]
    return EvalInstance(pair_id=pair_id,
                        generated_tokens=list(tokens),
                        generated_text=" ".join(tokens),
                        items=[(i, p) for i, p in items],
                        gold_items=list(gold),
                        reference_tokens=list(ref),
                        turn_index=turn,
                        mentioned_items=list(mentioned))


# ---------------------------------------------------------------------------
# Independent oracles


def bleu_oracle(hyp, refs, n):
    """Greedy list-removal matching instead of Counter clipping."""
    if not hyp:
        return 0.0
    log_sum = 0.0
    for order in range(1, n + 1):
        hyp_grams = [tuple(hyp[i:i + order])
                     for i in range(len(hyp) - order + 1)]
        if not hyp_grams:
            log_sum += math.log(BLEU_SMOOTH_EPS)
            continue
        # per-gram clip = max count over refs; emulate by a pooled max list
        pool = {}
        for ref in refs:
            ref_grams = [tuple(ref[i:i + order])
                         for i in range(len(ref) - order + 1)]
            local = {}
            for g in ref_grams:
                local[g] = local.get(g, 0) + 1
            for g, c in local.items():
                pool[g] = max(pool.get(g, 0), c)
        matched = 0
        for g in hyp_grams:
            if pool.get(g, 0) > 0:
                pool[g] -= 1
                matched += 1
        precision = matched / len(hyp_grams)
        log_sum += math.log(max(precision, BLEU_SMOOTH_EPS))
    ref_len = min((len(r) for r in refs),
                  key=lambda L: (abs(L - len(hyp)), L))
    bp = 1.0 if len(hyp) >= ref_len else \
        math.exp(1 - ref_len / max(1, len(hyp)))
    return bp * math.exp(log_sum / n)


def lcs_oracle(a, b):
    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0 or j == 0:
            return 0
        if a[i - 1] == b[j - 1]:
            return rec(i - 1, j - 1) + 1
        return max(rec(i - 1, j), rec(i, j - 1))

    return rec(len(a), len(b))


def rouge_oracle(hyp, ref, beta=1.2):
    h = [t.lower() for t in hyp]
    r = [t.lower() for t in ref]
    if not h or not r:
        return 0.0
    lcs = lcs_oracle(tuple(h), tuple(r))
    if lcs == 0:
        return 0.0
    p, rr = lcs / len(h), lcs / len(r)
    return (1 + beta ** 2) * p * rr / (rr + beta ** 2 * p)


def all_strings(max_len, alphabet=ALPHABET):
    for length in range(max_len + 1):
        for combo in itertools.product(alphabet, repeat=length):
            yield list(combo)


# ---------------------------------------------------------------------------
# Recall and ratios


class TestRecall:
    def test_hit_and_miss(self):
        instances = [
            inst("p1", items=[("m1", 0.6), ("m2", 0.4)], gold=["m1"]),
            inst("p2", items=[("m3", 0.9)], gold=["m1"]),
        ]
        assert recall_at_k(instances, 1) == 0.5

    def test_only_eligible_counted(self):
        instances = [
            inst("p1", items=[("m1", 1.0)], gold=["m1"]),
            inst("p2", items=[("m2", 1.0)], gold=[]),  # not eligible
        ]
        assert recall_at_k(instances, 1) == 1.0

    def test_no_slot_is_a_miss(self):
        # the model may rank the gold item internally, but a response
        # without a slot contributes an empty item list -> miss
        instances = [inst("p1", items=[], gold=["m1"])]
        assert recall_at_k(instances, 50) == 0.0

    def test_monotone_in_k(self):
        instances = [
            inst("p1", items=[("m2", 0.5), ("m1", 0.3), ("m3", 0.2)],
                 gold=["m1"]),
            inst("p2", items=[("m3", 0.9), ("m2", 0.1)], gold=["m2"]),
        ]
        vals = [recall_at_k(instances, k) for k in (1, 2, 3)]
        assert vals == sorted(vals)
        assert vals[0] == 0.0 and vals[1] == 1.0

    def test_no_eligible_raises(self):
        with pytest.raises(ValueError):
            recall_at_k([inst("p", gold=[])], 1)


class TestItemRatio:
    def test_percentage(self):
        instances = [inst("a", items=[("m1", 1.0)]), inst("b"),
                     inst("c", items=[("m2", 0.5)]), inst("d")]
        assert item_ratio(instances) == 50.0

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            item_ratio([])

    def test_slot_without_mention_does_not_count(self):
        # a captured slot distribution with no item token in the text
        instances = [inst("a", items=[("m1", 1.0)], mentioned=[]),
                     inst("b", items=[("m2", 1.0)], mentioned=["m2"])]
        assert item_ratio(instances) == 50.0

    def test_token_level_reading(self):
        instances = [inst("a", tokens=["i", "like", "m1"]),
                     inst("b", tokens=["m2"])]
        assert item_token_ratio(instances, {"m1", "m2"}) == 50.0


class TestBucketRecall:
    def _instances(self):
        return [
            inst("p1", items=[("m1", 1.0)], gold=["m1"], turn=1),
            inst("p2", items=[("m2", 1.0)], gold=["m3"], turn=3),
            inst("p3", items=[("m4", 1.0)], gold=["m4"], turn=7),
            inst("p4", items=[("m5", 1.0)], gold=["m5"], turn=12),
        ]

    def test_frequency_assignment(self):
        counts = {"m1": 2, "m3": 7, "m4": 50, "m5": 300}
        table = bucket_recall(self._instances(), counts, "frequency",
                              ks=(1,))
        assert table["[1,5)"]["n"] == 1
        assert table["[5,10)"]["n"] == 1
        assert table["[10,100)"]["n"] == 1
        assert table["[100,inf)"]["n"] == 1
        assert table["[1,5)"]["recall"][1] == 1.0
        assert table["[5,10)"]["recall"][1] == 0.0

    def test_rarest_gold_item_keys_bucket(self):
        counts = {"m1": 2, "m9": 500}
        instances = [inst("p", items=[("m1", 1.0)], gold=["m1", "m9"])]
        table = bucket_recall(instances, counts, "frequency", ks=(1,))
        assert list(table) == ["[1,5)"]

    def test_turn_assignment(self):
        table = bucket_recall(self._instances(), {}, "turn", ks=(1,))
        assert table["[1,6)"]["n"] == 2
        assert table["[6,11)"]["n"] == 1
        assert table["[11,inf)"]["n"] == 1

    def test_recombination_matches_global(self):
        counts = {"m1": 2, "m3": 7, "m4": 50, "m5": 300}
        instances = self._instances()
        table = bucket_recall(instances, counts, "frequency", ks=(1,))
        pooled_hits = sum(row["recall"][1] * row["n"]
                          for row in table.values())
        pooled_n = sum(row["n"] for row in table.values())
        assert pooled_hits / pooled_n == \
            pytest.approx(recall_at_k(instances, 1))

    def test_unseen_item_falls_in_lowest_bucket_or_other(self):
        # mention count 0 is below every edge -> "other"
        instances = [inst("p", items=[("mX", 1.0)], gold=["mX"])]
        table = bucket_recall(instances, {}, "frequency", ks=(1,))
        assert list(table) == ["other"]

    def test_unknown_bucketing_rejected(self):
        with pytest.raises(ValueError):
            bucket_recall(self._instances(), {}, "zodiac")


# ---------------------------------------------------------------------------
# Generation metrics


class TestDistinctN:
    def test_hand_example(self):
        # "a b a": 2 distinct unigrams / 3 tokens
        assert distinct_n([["a", "b", "a"]], 1) == pytest.approx(2 / 3)
        # bigrams: (a,b), (b,a) distinct -> 2/3
        assert distinct_n([["a", "b", "a"]], 2) == pytest.approx(2 / 3)

    def test_mean_over_responses(self):
        val = distinct_n([["a", "a"], ["a", "b"]], 1)
        assert val == pytest.approx((0.5 + 1.0) / 2)

    def test_short_response_contributes_zero(self):
        assert distinct_n([["a"]], 2) == 0.0
        assert distinct_n([[]], 1) == 0.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            distinct_n([], 1)
        with pytest.raises(ValueError):
            distinct_n([["a"]], 0)

    def test_exhaustive_brute_force(self):
        for tokens in all_strings(6):
            for n in (1, 2, 3):
                if not tokens:
                    expected = 0.0
                else:
                    grams = {tuple(tokens[i:i + n])
                             for i in range(len(tokens) - n + 1)}
                    expected = len(grams) / len(tokens)
                assert distinct_n([tokens], n) == pytest.approx(expected)


class TestBleu:
    def test_identical_is_one(self):
        hyp = ["i", "like", "this", "movie"]
        assert bleu_n(hyp, [hyp], 2) == pytest.approx(1.0)

    def test_disjoint_is_floored(self):
        val = bleu_n(["a", "b"], [["c", "d"]], 2)
        assert 0.0 < val <= BLEU_SMOOTH_EPS ** 0.5 * 1.01

    def test_empty_hypothesis_zero(self):
        assert bleu_n([], [["a"]], 4) == 0.0

    def test_brevity_penalty(self):
        # hyp is a strict prefix of the ref: precisions are 1, BP < 1
        val = bleu_n(["a", "b"], [["a", "b", "c", "d"]], 2)
        assert val == pytest.approx(math.exp(1 - 4 / 2))

    def test_clipping(self):
        # "a a a" against ref with a single "a": clipped precision 1/3
        val = bleu_n(["a", "a", "a"], [["a"]], 1)
        assert val == pytest.approx(1 / 3)

    def test_exhaustive_pairs_vs_oracle(self):
        for hyp in all_strings(4, ("a", "b")):
            for ref in all_strings(4, ("a", "b")):
                if not ref:
                    continue
                for n in (2, 4):
                    assert bleu_n(hyp, [ref], n) == \
                        pytest.approx(bleu_oracle(hyp, [ref], n), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from(ALPHABET), max_size=6),
           st.lists(st.lists(st.sampled_from(ALPHABET), min_size=0,
                             max_size=6), min_size=1, max_size=3))
    def test_random_multi_reference_vs_oracle(self, hyp, refs):
        assert bleu_n(hyp, refs, 4) == \
            pytest.approx(bleu_oracle(hyp, refs, 4), abs=1e-12)


class TestRougeL:
    def test_identical_is_one(self):
        assert rouge_l(["a", "b", "c"], ["a", "b", "c"]) == pytest.approx(1.0)

    def test_disjoint_is_zero(self):
        assert rouge_l(["a"], ["b"]) == 0.0

    def test_case_insensitive(self):
        assert rouge_l(["Movie"], ["movie"]) == pytest.approx(1.0)

    def test_empty_zero(self):
        assert rouge_l([], ["a"]) == 0.0
        assert rouge_l(["a"], []) == 0.0

    def test_hand_example(self):
        # hyp "a c", ref "a b c": LCS=2, P=1, R=2/3, beta=1.2
        p, r, b2 = 1.0, 2 / 3, 1.2 ** 2
        expected = (1 + b2) * p * r / (r + b2 * p)
        assert rouge_l(["a", "c"], ["a", "b", "c"]) == pytest.approx(expected)

    def test_exhaustive_pairs_vs_oracle(self):
        for hyp in all_strings(4, ("a", "b")):
            for ref in all_strings(4, ("a", "b")):
                assert rouge_l(hyp, ref) == \
                    pytest.approx(rouge_oracle(hyp, ref), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from(ALPHABET), max_size=6),
           st.lists(st.sampled_from(ALPHABET), max_size=6))
    def test_random_vs_oracle(self, hyp, ref):
        assert rouge_l(hyp, ref) == \
            pytest.approx(rouge_oracle(hyp, ref), abs=1e-12)


# ---------------------------------------------------------------------------
# Report assembly and transcript IO


class TestBuildReport:
    def _instances(self):
        return [
            inst("p1", items=[("m1", 0.8), ("m2", 0.2)], gold=["m1"],
                 tokens=["great", "movie", "m1"],
                 ref=["great", "movie", "m1"], turn=2),
            inst("p2", items=[], gold=["m3"],
                 tokens=["hello", "there"], ref=["hi"], turn=1),
            inst("p3", items=[("m2", 1.0)], gold=[],
                 tokens=["sure"], ref=[], turn=8),
        ]

    def test_fields(self):
        report = build_report(self._instances(), {"m1": 3, "m3": 20},
                              ppl=12.5)
        assert report.recall[1] == pytest.approx(0.5)
        assert report.n_instances == 3
        assert report.n_recall_eligible == 2
        assert report.item_ratio == pytest.approx(100 * 2 / 3)
        assert report.ppl == 12.5
        assert set(report.dist) == {2, 3, 4}
        assert set(report.bleu) == {2, 4}
        assert report.bleu[2] <= 1.0
        assert report.frequency_buckets and report.turn_buckets

    def test_serialization_and_text(self):
        report = build_report(self._instances(), {"m1": 3, "m3": 20})
        d = report.to_dict()
        assert "recall@1" in d["recall"]
        text = report.format_text()
        assert "recall@1" in text and "item_ratio" in text

    def test_no_gold_anywhere(self):
        report = build_report([inst("p", tokens=["hey"])])
        assert report.recall == {1: 0.0, 10: 0.0, 50: 0.0}
        assert report.frequency_buckets == {}


class TestTranscriptIO:
    def test_roundtrip_with_meta(self, tmp_path):
        path = tmp_path / "transcript.jsonl"
        recs = [{"pair_id": "p1", "generated_text": "hi",
                 "generated_tokens": ["hi"],
                 "items": [["m1", 0.9]], "gold_items": ["m1"]},
                {"pair_id": "p2", "generated_text": "",
                 "generated_tokens": [], "items": [], "gold_items": []}]
        write_transcript(path, recs, meta={"ppl": 9.1})
        back, meta = read_transcript(path)
        assert meta == {"ppl": 9.1}
        assert back == recs

    def test_instances_join_gold_table(self, tmp_path):
        recs = [{"pair_id": "p1", "generated_tokens": ["x"],
                 "items": [["m1", 0.4]], "gold_items": ["m1"]}]
        gold = {"p1": {"reference_tokens": ["x", "y"], "turn_index": 4}}
        (only,) = instances_from_transcript(recs, gold)
        assert only.reference_tokens == ["x", "y"]
        assert only.turn_index == 4
        assert only.items == [("m1", 0.4)]

    def test_no_meta_record(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_transcript(path, [{"pair_id": "p1"}])
        back, meta = read_transcript(path)
        assert meta == {} and len(back) == 1
