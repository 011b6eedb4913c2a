"""Session-oriented tracking service over HTTP+JSON.

Each session holds the current internal query; a track call runs the model
on (internal query, input) and the Markov update keeps no other state.
Overrides let a human flip individual keep/drop decisions; the corrected
internal query feeds the next turn.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .data import tokenize
from .model import QueryTracker

DEFAULT_TTL_SECONDS = 30 * 60  # mirrors the mining session window


class TrackRequest(BaseModel):
    query: str


class OverrideRequest(BaseModel):
    index: int
    keep: bool


@dataclass
class Session:
    id: str
    internal_query: list[str] = field(default_factory=list)
    decisions: list[dict] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    last_access: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS,
                 clock: Callable[[], float] = time.monotonic):
        self._sessions: dict[str, Session] = {}
        self._ttl = ttl_seconds
        self._clock = clock
        self._lock = threading.Lock()

    def create(self) -> Session:
        session = Session(id=uuid.uuid4().hex, last_access=self._clock())
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is not None and self._clock() - session.last_access > self._ttl:
                del self._sessions[session_id]
                session = None
        if session is None:
            raise KeyError(session_id)
        session.last_access = self._clock()
        return session


def _rebuild_internal(decisions: list[dict]) -> list[str]:
    out, seen = [], set()
    for d in decisions:
        if d["keep"] and d["word"] not in seen:
            seen.add(d["word"])
            out.append(d["word"])
    return out


def apply_track(tracker: QueryTracker, session: Session, text: str) -> dict:
    """One tracking turn; mutates the session and returns the response body."""
    tokens = list(dict.fromkeys(tokenize(text)))
    if not tokens:
        raise ValueError("query tokenizes to nothing")
    noop = False
    if not session.internal_query:
        # Turn 1: no previous internal query, take the input verbatim.
        session.internal_query = tokens
        session.decisions = [{"word": w, "keep": True, "prob": 1.0, "source": "q2"}
                             for w in tokens]
    else:
        q1 = list(session.internal_query)
        q2 = [w for w in tokens if w not in q1]
        if not q2:
            noop = True
            session.decisions = [{"word": w, "keep": True, "prob": 1.0, "source": "q1"}
                                 for w in q1]
        else:
            labels, probs, q3 = tracker.track(q1, q2)
            q1_used = q1[:len(labels)]
            session.decisions = (
                [{"word": w, "keep": bool(lab), "prob": float(p), "source": "q1"}
                 for w, lab, p in zip(q1_used, labels, probs)]
                + [{"word": w, "keep": True, "prob": 1.0, "source": "q2"}
                   for w in q2[:tracker.hp.max_len]])
            session.internal_query = q3
    turn = {"turn": len(session.history) + 1, "input": text,
            "internal_query": list(session.internal_query),
            "decisions": [dict(d) for d in session.decisions],
            "noop": noop}
    session.history.append(turn)
    return dict(turn)


def apply_override(session: Session, index: int, keep: bool) -> dict:
    if not 0 <= index < len(session.decisions):
        raise IndexError(f"decision index {index} out of range "
                         f"(0..{len(session.decisions) - 1})")
    d = session.decisions[index]
    d["keep"] = keep
    d["source"] = "override"
    session.internal_query = _rebuild_internal(session.decisions)
    return {"turn": len(session.history), "input": None,
            "internal_query": list(session.internal_query),
            "decisions": [dict(x) for x in session.decisions],
            "noop": False}


def create_app(tracker: QueryTracker, ttl_seconds: float = DEFAULT_TTL_SECONDS,
               persist_dir: Path | None = None,
               clock: Callable[[], float] = time.monotonic) -> FastAPI:
    app = FastAPI(title="qtrack session service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    store = SessionStore(ttl_seconds=ttl_seconds, clock=clock)
    app.state.store = store

    def persist(session_id: str, event: dict) -> None:
        if persist_dir is None:
            return
        persist_dir.mkdir(parents=True, exist_ok=True)
        with open(Path(persist_dir) / f"{session_id}.jsonl", "a",
                  encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    def get_session(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"unknown or expired session {session_id}")

    @app.post("/v1/sessions")
    def create_session() -> dict:
        session = store.create()
        return {"session_id": session.id}

    @app.post("/v1/sessions/{session_id}/track")
    def track(session_id: str, req: TrackRequest) -> dict:
        session = get_session(session_id)
        with session.lock:
            try:
                response = apply_track(tracker, session, req.query)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            persist(session_id, {"event": "track", **response})
        return response

    @app.post("/v1/sessions/{session_id}/override")
    def override(session_id: str, req: OverrideRequest) -> dict:
        session = get_session(session_id)
        with session.lock:
            try:
                response = apply_override(session, req.index, req.keep)
            except IndexError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            persist(session_id, {"event": "override", "index": req.index,
                                 "keep": req.keep, **response})
        return response

    @app.get("/v1/sessions/{session_id}/history")
    def history(session_id: str) -> dict:
        session = get_session(session_id)
        with session.lock:
            return {"session_id": session_id,
                    "turns": [dict(t) for t in session.history]}

    return app
