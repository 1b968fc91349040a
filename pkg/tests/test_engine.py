import time

import pytest

from recindial.engine import (ChatEngine, DecodeConfig, SessionStore,
                              handle_message)
from recindial.errors import SessionNotFoundError
from recindial.synthetic import item_name_of


@pytest.fixture(scope="module")
def engine(toy_pipeline):
    return ChatEngine(toy_pipeline["checkpoint"])


class TestDetectItems:
    def test_exact_match(self, engine):
        name = item_name_of(2)
        text = f"i loved {name} a lot"
        (match,) = engine.detect_items(text)
        s, e, item_id = match
        assert text[s:e].lower() == name.lower()
        assert item_id == "102"

    def test_case_insensitive(self, engine):
        text = item_name_of(0).upper()
        (match,) = engine.detect_items(text)
        assert match[2] == "100"

    def test_multiple_non_overlapping(self, engine):
        text = f"{item_name_of(1)} and {item_name_of(3)}"
        matches = engine.detect_items(text)
        assert [m[2] for m in matches] == ["101", "103"]

    def test_no_match(self, engine):
        assert engine.detect_items("nothing to see here") == []


class TestEncodeUserText:
    def test_items_wrapped_in_markers(self, engine):
        v = engine.vocab
        utt = engine.encode_user_text(f"i watched {item_name_of(4)}")
        toks = utt.tokens
        item_tok = v.item_to_token["104"]
        i = toks.index(item_tok)
        assert toks[i - 1] == v.rec_start_id
        assert toks[i + 1] == v.rec_end_id
        assert utt.item_spans == [(i, "104")]

    def test_unknown_words_dropped(self, engine):
        utt = engine.encode_user_text("xylophone quixotic watched")
        words = [engine.vocab.token_of(t) for t in utt.tokens]
        assert "watched" in words
        assert "xylophone" not in words


class TestRecommend:
    def test_response_is_pointer_legal(self, engine, toy_pipeline):
        v = engine.vocab
        utt = engine.encode_user_text(f"i watched {item_name_of(0)}")
        result = engine.recommend(utt.tokens, ["E0"])
        open_slot = False
        for t in result.response_tokens:
            if t == v.rec_start_id:
                open_slot = True
            elif t == v.rec_end_id:
                open_slot = False
            elif open_slot:
                assert v.is_item(t)
            else:
                assert not v.is_item(t)

    def test_bias_for_unknown_entities_is_none(self, engine):
        assert engine.bias_for(["nope"]) is None
        assert engine.bias_for([]) is None

    def test_bias_shape(self, engine):
        b = engine.bias_for(["E0", "E1"])
        assert b is not None
        assert b.shape == (engine.vocab.item_size,)


class TestSessionStore:
    def test_create_get_delete(self):
        store = SessionStore()
        s = store.create()
        assert store.get(s.id) is s
        store.delete(s.id)
        with pytest.raises(SessionNotFoundError):
            store.get(s.id)

    def test_unknown_session(self):
        store = SessionStore()
        with pytest.raises(SessionNotFoundError):
            store.get("missing")
        with pytest.raises(SessionNotFoundError):
            store.delete("missing")

    def test_ttl_expiry(self):
        store = SessionStore(ttl_seconds=0.01)
        s = store.create()
        s.last_active = time.time() - 1.0
        with pytest.raises(SessionNotFoundError):
            store.get(s.id)

    def test_sessions_are_isolated(self):
        store = SessionStore()
        a, b = store.create(), store.create()
        a.entity_set.append("E1")
        assert b.entity_set == []


class TestHandleMessage:
    def test_chat_turn_round_trip(self, engine):
        store = SessionStore()
        session = store.create(DecodeConfig(beam_width=2, n_max=16, topk=3))
        turn = handle_message(engine, session,
                              f"i watched {item_name_of(0)} last night")
        assert turn.turn_index == 1
        assert len(session.history) == 2  # seeker + recommender
        assert session.entity_set == ["E0"]
        assert len(turn.items) <= 3
        for item in turn.items:
            assert set(item) == {"id", "name", "prob"}
        # item spans index into the response text
        for span in turn.item_spans:
            assert turn.response_text[
                span["char_start"]:span["char_end"]] == span["name"]

    def test_entity_set_grows_monotonically(self, engine):
        store = SessionStore()
        session = store.create(DecodeConfig(beam_width=1, n_max=12, topk=2))
        handle_message(engine, session, f"i watched {item_name_of(1)}")
        handle_message(engine, session, f"also {item_name_of(2)}")
        handle_message(engine, session, f"and {item_name_of(1)} again")
        assert session.entity_set == ["E1", "E2"]
        assert session.turn_index == 3

    def test_per_message_k_override(self, engine):
        store = SessionStore()
        session = store.create(DecodeConfig(beam_width=1, n_max=12, topk=5))
        turn = handle_message(engine, session,
                              f"i watched {item_name_of(3)}", k=1)
        assert len(turn.items) <= 1
        # session default untouched
        assert session.decode.topk == 5
