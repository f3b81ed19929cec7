"""Per-session conversation history with a bounded recall window.

Sessions are kept in memory and optionally mirrored to one JSON-lines file
per session under a state directory. A session that stays idle for 24 hours
is dropped on next access.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import InvalidParams, UnknownSession

DEFAULT_WINDOW_TURNS = 10
SESSION_IDLE_TTL_S = 24 * 3600


@dataclass(frozen=True)
class Turn:
    query: str
    answer: str
    references: list[str]  # doc ids
    timestamp: str  # ISO 8601, UTC

    def __post_init__(self) -> None:
        if not self.query:
            raise InvalidParams("turn query must be non-empty")


@dataclass
class Session:
    session_id: str
    created_at: str
    turns: list[Turn] = field(default_factory=list)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def window(session: Session, max_turns: int = DEFAULT_WINDOW_TURNS) -> list[Turn]:
    """Last `max_turns` turns in chronological order."""
    if max_turns < 1:
        raise InvalidParams("max_turns must be positive")
    return list(session.turns[-max_turns:])


class SessionStore:
    """Thread-safe session map; operations on one session are serialized."""

    def __init__(self, state_dir: str | Path | None = None, idle_ttl_s: float = SESSION_IDLE_TTL_S):
        self._sessions: dict[str, Session] = {}
        self._last_active: dict[str, float] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._mutex = threading.Lock()
        self._idle_ttl_s = idle_ttl_s
        self._state_dir = Path(state_dir) if state_dir else None
        if self._state_dir:
            (self._state_dir / "sessions").mkdir(parents=True, exist_ok=True)

    def create_session(self) -> Session:
        session = Session(session_id=secrets.token_hex(16), created_at=_utc_now())
        with self._mutex:
            self._sessions[session.session_id] = session
            self._last_active[session.session_id] = time.monotonic()
            self._locks[session.session_id] = threading.Lock()
        return session

    def _expire_locked(self, now: float) -> None:
        stale = [sid for sid, t in self._last_active.items() if now - t > self._idle_ttl_s]
        for sid in stale:
            self._sessions.pop(sid, None)
            self._last_active.pop(sid, None)
            self._locks.pop(sid, None)

    def get(self, session_id: str) -> Session:
        now = time.monotonic()
        with self._mutex:
            self._expire_locked(now)
            session = self._sessions.get(session_id)
            if session is None:
                raise UnknownSession(f"no such session: {session_id}")
            self._last_active[session_id] = now
            return session

    def lock(self, session_id: str) -> threading.Lock:
        """Per-session lock; one conversation advances one turn at a time."""
        with self._mutex:
            if session_id not in self._locks:
                raise UnknownSession(f"no such session: {session_id}")
            return self._locks[session_id]

    def append_turn(self, session_id: str, turn: Turn) -> Session:
        session = self.get(session_id)
        session.turns.append(turn)
        if self._state_dir:
            self._persist_turn(session_id, turn)
        return session

    def _persist_turn(self, session_id: str, turn: Turn) -> None:
        path = self._state_dir / "sessions" / f"{session_id}.jsonl"
        record = {
            "query": turn.query,
            "answer": turn.answer,
            "references": turn.references,
            "timestamp": turn.timestamp,
        }
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def make_turn(query: str, answer: str, references: list[str]) -> Turn:
    return Turn(query=query, answer=answer, references=list(references), timestamp=_utc_now())
