"""Event-driven classifier session.

Reproduces the block-style API of the original mobile extension: set a
model URL, attach a frame source, load, classify the source's current
frame, stop. Completion is reported through ordered events rather than
return values, mirroring the single result callback of the original host.
"""

from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol
from urllib.parse import urlparse

from . import graph, vision
from .bundle import ModelBundle
from .errors import InvalidUrl, NotReady, TminferError
from .vision import Frame

__all__ = [
    "Prediction",
    "SessionEvent",
    "SessionConfig",
    "ClassifierSession",
    "FrameSource",
    "StaticFrameSource",
    "new_session",
    "format_result",
]


@dataclass(frozen=True)
class Prediction:
    label: str
    probability: float


@dataclass(frozen=True)
class SessionEvent:
    kind: str  # classifier_ready | got_classification | classification_error | load_error
    seq: int
    request_id: int | None = None
    predictions: tuple[Prediction, ...] = ()
    reason: str = ""


class FrameSource(Protocol):
    def current_frame(self) -> Frame: ...


class StaticFrameSource:
    """Frame source that always serves the same frame; handy for tests."""

    def __init__(self, frame: Frame):
        self.frame = frame
        self.closed = False

    def current_frame(self) -> Frame:
        return self.frame

    def close(self):
        self.closed = True


@dataclass
class SessionConfig:
    model_url: str | None = None
    cache_dir: str | None = None
    prefer_cache: bool = True
    # Override for tests / local bundles: model_url -> ModelBundle.
    loader: Callable[[str], ModelBundle] | None = None


def _default_loader(cache_dir: str | None, prefer_cache: bool):
    def load(url: str) -> ModelBundle:
        from . import fetch

        return fetch.open_model_ref(url, cache_dir=cache_dir, prefer_cache=prefer_cache)

    return load


def format_result(predictions) -> str:
    """Deterministic wire form: JSON array of {label, probability} objects,
    probabilities fixed to 6 decimals, metadata label order preserved."""
    parts = []
    for p in predictions:
        parts.append(
            '{"label":%s,"probability":%.6f}' % (json.dumps(p.label), p.probability)
        )
    return "[" + ",".join(parts) + "]"


class ClassifierSession:
    """States: empty -> loading -> ready -> stopped, with failed on load error.

    Mutations may come from any thread; they serialize on an internal lock
    and events fire in seq order on the mutating thread.
    """

    def __init__(self, config: SessionConfig | None = None):
        cfg = config or SessionConfig()
        self._lock = threading.RLock()
        self._state = "empty"
        self._model_url = None
        self._plan: graph.ExecutionPlan | None = None
        self._source: FrameSource | None = None
        self._pending: deque[tuple[int, Frame]] = deque()
        self._draining = False
        self._seq = 0
        self._next_request = 1
        self._subscribers: list[Callable[[SessionEvent], None]] = []
        self._event_queue: deque[SessionEvent] = deque()
        self._loader = cfg.loader or _default_loader(cfg.cache_dir, cfg.prefer_cache)
        if cfg.model_url is not None:
            self.set_model_url(cfg.model_url)

    @property
    def state(self) -> str:
        with self._lock:
            return self._state

    def subscribe(self, callback: Callable[[SessionEvent], None]):
        with self._lock:
            self._subscribers.append(callback)

    def poll(self) -> list[SessionEvent]:
        """Drain and return events accumulated since the last poll."""
        with self._lock:
            out = list(self._event_queue)
            self._event_queue.clear()
            return out

    def _emit(self, kind: str, **kw):
        self._seq += 1
        event = SessionEvent(kind=kind, seq=self._seq, **kw)
        self._event_queue.append(event)
        for cb in list(self._subscribers):
            cb(event)

    def set_model_url(self, url: str):
        scheme = urlparse(url).scheme
        if scheme and scheme not in ("http", "https", "file"):
            raise InvalidUrl(f"unsupported scheme {scheme!r} in {url!r}")
        with self._lock:
            self._model_url = url
            if self._state == "ready":
                self._plan = None
                self._state = "empty"

    def attach_source(self, source: FrameSource):
        with self._lock:
            old = self._source
            self._source = source
        if old is not None and hasattr(old, "close"):
            old.close()

    def load(self):
        """Load the configured model; completion arrives as an event."""
        with self._lock:
            if self._model_url is None:
                self._emit("load_error", reason="no model url")
                self._state = "failed"
                return
            self._state = "loading"
            try:
                bundle = self._loader(self._model_url)
                self._plan = graph.build_plan(bundle)
            except TminferError as exc:
                self._state = "failed"
                self._emit("load_error", reason=str(exc))
                return
            except OSError as exc:
                self._state = "failed"
                self._emit("load_error", reason=f"fetch failed: {exc}")
                return
            self._state = "ready"
            self._emit("classifier_ready")

    def classify_frame(self) -> int:
        """Capture the source's current frame now and queue it; FIFO service."""
        with self._lock:
            if self._state != "ready":
                raise NotReady(f"classify_frame in state {self._state}")
            request_id = self._next_request
            self._next_request += 1
            if self._source is None:
                self._emit("classification_error", request_id=request_id,
                           reason="no source")
                return request_id
            try:
                frame = self._source.current_frame()
            except Exception as exc:  # noqa: BLE001 - source is caller-supplied
                self._emit("classification_error", request_id=request_id,
                           reason=f"frame capture failed: {exc}")
                return request_id
            self._pending.append((request_id, frame))
            self._drain()
            return request_id

    def _drain(self):
        if self._draining:
            return
        self._draining = True
        try:
            while self._pending:
                request_id, frame = self._pending.popleft()
                try:
                    x = vision.preprocess(frame, self._plan.input_size)
                    probs = graph.run(self._plan, x)
                except TminferError as exc:
                    self._emit("classification_error", request_id=request_id,
                               reason=str(exc))
                    continue
                preds = tuple(
                    Prediction(label, float(p))
                    for label, p in zip(self._plan.output_labels, probs)
                )
                self._emit("got_classification", request_id=request_id,
                           predictions=preds)
        finally:
            self._draining = False

    def stop(self):
        with self._lock:
            self._drain()  # in-flight requests complete before shutdown
            source, self._source = self._source, None
            self._state = "stopped"
        if source is not None and hasattr(source, "close"):
            source.close()


def new_session(config: SessionConfig | None = None) -> ClassifierSession:
    return ClassifierSession(config)
