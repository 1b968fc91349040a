"""HTTP chat service.

Endpoints (JSON payloads, schema v1):

* ``POST /session`` -> ``{session_id}``
* ``POST /chat`` ``{session_id, message, k?}`` ->
  ``{response, items: [{id, name, prob}], item_spans, turn_index, latency_ms}``
* ``GET /health`` -> ``{status, checkpoint_hash}``
* ``DELETE /session/{id}``
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .engine import ChatEngine, DecodeConfig, SessionStore, handle_message
from .errors import SessionNotFoundError


class SessionRequest(BaseModel):
    beam_width: int | None = None
    n_max: int | None = None
    k: int | None = None


class ChatRequest(BaseModel):
    session_id: str
    message: str = Field(min_length=1)
    k: int | None = None


def create_app(engine: ChatEngine, store: SessionStore | None = None) -> FastAPI:
    app = FastAPI(title="recindial chat service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    store = store or SessionStore()
    app.state.engine = engine
    app.state.store = store

    @app.post("/session")
    def create_session(req: SessionRequest | None = None):
        req = req or SessionRequest()
        decode = DecodeConfig(
            beam_width=req.beam_width or engine.decode.beam_width,
            n_max=req.n_max or engine.decode.n_max,
            topk=req.k or engine.decode.topk)
        session = store.create(decode)
        return {"session_id": session.id}

    @app.post("/chat")
    def chat(req: ChatRequest):
        try:
            session = store.get(req.session_id)
        except SessionNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        turn = handle_message(engine, session, req.message, k=req.k)
        return {"response": turn.response_text,
                "items": turn.items,
                "item_spans": turn.item_spans,
                "turn_index": turn.turn_index,
                "latency_ms": turn.latency_ms}

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoint_hash": engine.ckpt.vocab_hash}

    @app.delete("/session/{session_id}")
    def delete_session(session_id: str):
        try:
            store.delete(session_id)
        except SessionNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"deleted": session_id}

    return app
