"""HTTP classification service: one model per process, FIFO inference."""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request, Response

from . import graph
from .bundle import ModelBundle
from .errors import TminferError
from .session import ClassifierSession, SessionConfig, format_result
from .vision import decode_image, preprocess


class _RequestFrameSource:
    """Holds the frame of the request currently being serviced."""

    def __init__(self):
        self.frame = None

    def current_frame(self):
        return self.frame


def _extract_image_bytes(body: bytes, content_type: str) -> bytes | None:
    if content_type.startswith("multipart/form-data"):
        import email.parser
        import email.policy

        header = f"Content-Type: {content_type}\r\n\r\n".encode()
        msg = email.parser.BytesParser(policy=email.policy.HTTP).parsebytes(
            header + body
        )
        for part in msg.iter_parts():
            disp = part.get("Content-Disposition", "")
            if 'name="image"' in disp:
                return part.get_payload(decode=True)
        return None
    return body


def create_app(bundle: ModelBundle, request_timeout: float = 30.0) -> FastAPI:
    app = FastAPI()
    source = _RequestFrameSource()
    sess = ClassifierSession(SessionConfig(model_url="file:///preloaded",
                                           loader=lambda _url: bundle))
    sess.attach_source(source)
    sess.load()
    ready = any(e.kind == "classifier_ready" for e in sess.poll())
    lock = threading.Lock()

    @app.get("/healthz")
    def healthz():
        return Response("ok", media_type="text/plain")

    @app.get("/metadata")
    def metadata():
        md = bundle.metadata
        return {
            "labels": list(md.labels),
            "imageSize": md.image_size,
            "modelName": md.model_name,
        }

    @app.post("/classify")
    async def classify(request: Request):
        if not ready:
            return Response("model not ready", status_code=503)
        body = await request.body()
        image = _extract_image_bytes(body, request.headers.get("content-type", ""))
        if not image:
            return Response("no image payload", status_code=415)
        try:
            frame = decode_image(image)
        except TminferError:
            return Response("undecodable image", status_code=415)
        if not lock.acquire(timeout=request_timeout):
            return Response("busy", status_code=503)
        try:
            source.frame = frame
            sess.classify_frame()
            events = [e for e in sess.poll() if e.kind == "got_classification"]
        finally:
            lock.release()
        if not events:
            return Response("classification failed", status_code=500)
        return Response(format_result(events[-1].predictions),
                        media_type="application/json")

    return app


def classify_tensor(bundle: ModelBundle, plan: graph.ExecutionPlan, frame):
    """Shared helper: frame -> ordered per-class probabilities."""
    x = preprocess(frame, bundle.metadata.image_size)
    return graph.run(plan, x)
