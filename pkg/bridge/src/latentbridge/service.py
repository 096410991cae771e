"""Request dispatch: one JSON line in, exactly one JSON line out.

Every failure mode (undecodable bytes, junk JSON, unknown ops, broken
payloads, model errors, allocation failures) turns into an error
response instead of an exception, so no single request can take the
server down. The request id is echoed whenever the request carried a
usable integer id and is null otherwise. Responses never contain
embedded newlines, keeping the one-message-per-line framing intact.
"""

from __future__ import annotations

import json

from .models import ModelStack
from .objective import cut_config_from_payload, score_with_grad
from .wire import WireError, decode_tensor, encode_tensor

_OPS = ("encode_text", "encode_image", "generate", "generate_with_grad", "info")


def _field(payload: dict, name: str):
    if name not in payload:
        raise WireError(f"payload is missing {name!r}")
    return payload[name]


class ModelService:
    """Stateless dispatcher over one immutable model stack."""

    def __init__(self, stack: ModelStack):
        self._stack = stack

    def handle_line(self, raw: bytes) -> bytes:
        """Answer one request line with one newline-terminated response."""
        response = self._respond(raw)
        try:
            return json.dumps(response, allow_nan=False).encode("utf-8") + b"\n"
        except (TypeError, ValueError):
            fallback = {"id": response.get("id"), "error": "result was not serializable"}
            return json.dumps(fallback).encode("utf-8") + b"\n"

    def _respond(self, raw: bytes) -> dict:
        try:
            message = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError, RecursionError) as exc:
            return {"id": None, "error": f"request is not valid JSON: {exc}"}
        if not isinstance(message, dict):
            return {"id": None, "error": "request must be a JSON object"}
        request_id = message.get("id")
        if not isinstance(request_id, int) or isinstance(request_id, bool):
            return {"id": None, "error": f"request id must be an integer, got {request_id!r}"}
        try:
            result = self._dispatch(message.get("op"), message.get("payload"))
            return {"id": request_id, "result": result}
        except Exception as exc:  # every failure becomes an error response
            return {"id": request_id, "error": str(exc) or type(exc).__name__}

    def _dispatch(self, op, payload):
        if op not in _OPS:
            raise WireError(f"unknown op {op!r}")
        if payload is None:
            payload = {}
        if not isinstance(payload, dict):
            raise WireError(f"payload must be an object, got {type(payload).__name__}")
        if op == "info":
            return self._stack.info()
        if op == "encode_text":
            features = self._stack.encode_text(_field(payload, "text"))
            return {"features": encode_tensor(features)}
        if op == "encode_image":
            features = self._stack.encode_image(decode_tensor(_field(payload, "image")))
            return {"features": encode_tensor(features)}
        if op == "generate":
            image = self._stack.generate(decode_tensor(_field(payload, "latent")))
            return {"image": encode_tensor(image)}
        cfg = cut_config_from_payload(payload.get("cutouts"))
        fitness, gradient = score_with_grad(
            self._stack,
            decode_tensor(_field(payload, "latent")),
            decode_tensor(_field(payload, "text_features")),
            cfg,
        )
        return {"fitness": fitness, "gradient": encode_tensor(gradient)}
