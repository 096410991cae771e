"""Client for the model-bridge wire protocol.

The bridge serves a text encoder, an image encoder, and a conditional
image generator behind five operations: ``encode_text``,
``encode_image``, ``generate``, ``generate_with_grad``, and ``info``.

Wire format, shared verbatim with the server:

- One UTF-8 JSON message per line.
- Request:  ``{"id": <int>, "op": <str>, "payload": <object>}``
- Response: ``{"id": <int>, "result": <object>}`` on success,
  ``{"id": <int>, "error": <string>}`` on failure. Responses echo the
  request id and arrive in request order; the client keeps exactly one
  request in flight per connection.
- Tensor:   ``{"shape": [<ints>], "data": <base64>}`` where ``data``
  holds the elements as little-endian 32-bit floats in C order.

Floats are 32-bit on the wire; the client upcasts to float64 after
decoding. Endpoints are ``host:port`` for TCP or ``stdio:<command>`` to
spawn the server as a subprocess and talk over its standard streams.
"""

from __future__ import annotations

import base64
import json
import shlex
import socket
import subprocess
import threading

import numpy as np

from .errors import BridgeProtocolError, EvaluationError, ShapeError
from .latent import LatentCode, LatentShape, flatten
from .objective import CutoutPolicy, Objective


def encode_tensor(array: np.ndarray) -> dict:
    """Pack an array as a wire tensor (little-endian float32, C order)."""
    array = np.asarray(array, dtype="<f4")
    return {
        "shape": list(array.shape),
        "data": base64.b64encode(array.tobytes(order="C")).decode("ascii"),
    }


def decode_tensor(obj) -> np.ndarray:
    """Unpack a wire tensor, upcasting to float64."""
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise BridgeProtocolError(f"malformed tensor: {obj!r}")
    shape = obj["shape"]
    if not isinstance(shape, list) or not all(
        isinstance(d, int) and d >= 0 for d in shape
    ):
        raise BridgeProtocolError(f"malformed tensor shape: {shape!r}")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except (ValueError, TypeError) as exc:
        raise BridgeProtocolError(f"tensor data is not valid base64: {exc}") from None
    if len(raw) % 4:
        raise BridgeProtocolError(f"tensor data length {len(raw)} is not a multiple of 4")
    flat = np.frombuffer(raw, dtype="<f4")
    expected = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if flat.size != expected:
        raise BridgeProtocolError(
            f"tensor has {flat.size} elements but shape {shape} implies {expected}"
        )
    return flat.reshape(shape).astype(np.float64)


class _TcpTransport:
    def __init__(self, host: str, port: int):
        self._sock = socket.create_connection((host, port), timeout=60.0)
        self._reader = self._sock.makefile("rb")

    def send_line(self, line: bytes) -> None:
        self._sock.sendall(line)

    def recv_line(self) -> bytes:
        return self._reader.readline()

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()


class _StdioTransport:
    def __init__(self, argv: list[str]):
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )

    def send_line(self, line: bytes) -> None:
        if self._proc.stdin is None or self._proc.poll() is not None:
            raise BridgeProtocolError("bridge subprocess is not running")
        self._proc.stdin.write(line)
        self._proc.stdin.flush()

    def recv_line(self) -> bytes:
        assert self._proc.stdout is not None
        return self._proc.stdout.readline()

    def close(self) -> None:
        if self._proc.stdin is not None:
            self._proc.stdin.close()
        self._proc.terminate()
        self._proc.wait(timeout=10.0)


def _open_transport(endpoint: str):
    if endpoint.startswith("stdio:"):
        argv = shlex.split(endpoint[len("stdio:") :])
        if not argv:
            raise BridgeProtocolError("stdio endpoint needs a command")
        return _StdioTransport(argv)
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise BridgeProtocolError(
            f"endpoint must be host:port or stdio:<command>, got {endpoint!r}"
        )
    return _TcpTransport(host, int(port))


class BridgeClient:
    """Line-delimited JSON RPC over one connection, one request in flight.

    Calls are serialized with a lock, so one client may be shared across
    threads; each call still waits for its own response before the next
    request is written.
    """

    def __init__(self, transport):
        self._transport = transport
        self._next_id = 0
        self._lock = threading.Lock()

    @classmethod
    def connect(cls, endpoint: str) -> "BridgeClient":
        return cls(_open_transport(endpoint))

    def close(self) -> None:
        self._transport.close()

    def _call(self, op: str, payload: dict) -> dict:
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            line = json.dumps({"id": request_id, "op": op, "payload": payload})
            self._transport.send_line(line.encode("utf-8") + b"\n")
            raw = self._transport.recv_line()
        if not raw:
            raise BridgeProtocolError(f"connection closed while waiting for {op!r}")
        try:
            response = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BridgeProtocolError(f"response to {op!r} is not valid JSON: {exc}") from None
        if not isinstance(response, dict):
            raise BridgeProtocolError(f"response to {op!r} is not an object")
        if response.get("id") != request_id:
            raise BridgeProtocolError(
                f"response id {response.get('id')!r} does not echo request id {request_id}"
            )
        if "error" in response:
            raise EvaluationError(f"bridge {op} failed: {response['error']}")
        if "result" not in response:
            raise BridgeProtocolError(f"response to {op!r} has neither result nor error")
        return response["result"]

    def info(self) -> dict:
        result = self._call("info", {})
        if not isinstance(result, dict):
            raise BridgeProtocolError("info result is not an object")
        return result

    def encode_text(self, text: str) -> np.ndarray:
        result = self._call("encode_text", {"text": text})
        return decode_tensor(result.get("features"))

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        result = self._call("encode_image", {"image": encode_tensor(image)})
        return decode_tensor(result.get("features"))

    def generate(self, latent: np.ndarray) -> np.ndarray:
        result = self._call("generate", {"latent": encode_tensor(latent)})
        return decode_tensor(result.get("image"))

    def generate_with_grad(
        self, latent: np.ndarray, text_features: np.ndarray, cutouts: dict
    ) -> tuple[float, np.ndarray]:
        result = self._call(
            "generate_with_grad",
            {
                "latent": encode_tensor(latent),
                "text_features": encode_tensor(text_features),
                "cutouts": cutouts,
            },
        )
        fitness = result.get("fitness")
        if not isinstance(fitness, (int, float)):
            raise BridgeProtocolError(f"generate_with_grad fitness is {fitness!r}")
        gradient = decode_tensor(result.get("gradient"))
        if gradient.ndim != 1 or gradient.size != latent.size:
            raise BridgeProtocolError(
                f"gradient has shape {gradient.shape}, expected ({latent.size},)"
            )
        return float(fitness), gradient


class _BridgeGenerator:
    """Generator facade over the wire protocol."""

    def __init__(self, client: BridgeClient, shape: LatentShape, image_size: int):
        self._client = client
        self.shape = shape
        self.image_size = image_size

    def generate(self, code: LatentCode) -> np.ndarray:
        image = self._client.generate(flatten(code))
        if image.ndim != 3 or image.shape[2] != 3:
            raise BridgeProtocolError(f"generate returned shape {image.shape}, expected (H, W, 3)")
        return image


class _BridgeEncoder:
    """Image-encoder facade over the wire protocol; accepts any image size."""

    def __init__(self, client: BridgeClient, feature_dim: int, input_size: int):
        self._client = client
        self.feature_dim = feature_dim
        self.input_size = input_size

    def encode(self, image: np.ndarray) -> np.ndarray:
        features = self._client.encode_image(image)
        if features.shape != (self.feature_dim,):
            raise BridgeProtocolError(
                f"encode_image returned shape {features.shape}, expected ({self.feature_dim},)"
            )
        return features


class BridgeBackend:
    """Pipeline adapter backed by a bridge server.

    Mirrors the toy pipeline's surface (shape, generate, encode,
    encode_text, identity, objective) so experiment code can swap
    backends without branching. Gradients come from the server's
    generate_with_grad; fitness-only evaluations compose generate with
    client-side cutouts and encode_image.
    """

    def __init__(self, client: BridgeClient):
        self._client = client
        info = client.info()
        try:
            feature_dim = int(info["feature_dim"])
            latent_total = int(info["latent_total"])
            resolution = int(info["image_resolution"])
            hidden_blocks = int(info["hidden_blocks"])
            latent_dim = int(info["latent_dim"])
            self._models = str(info["models"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BridgeProtocolError(f"info response is incomplete: {exc}") from None
        shape = LatentShape(num_hidden_layers=hidden_blocks, latent_dim=latent_dim)
        if shape.total != latent_total:
            raise BridgeProtocolError(
                f"info is inconsistent: {hidden_blocks} blocks x {latent_dim} dims "
                f"gives {shape.total} latent elements, not {latent_total}"
            )
        self.generator = _BridgeGenerator(client, shape, resolution)
        self.encoder = _BridgeEncoder(client, feature_dim, resolution)

    @classmethod
    def connect(cls, endpoint: str) -> "BridgeBackend":
        return cls(BridgeClient.connect(endpoint))

    def close(self) -> None:
        self._client.close()

    @property
    def shape(self) -> LatentShape:
        return self.generator.shape

    def generate(self, code: LatentCode) -> np.ndarray:
        return self.generator.generate(code)

    def encode(self, img: np.ndarray) -> np.ndarray:
        return self.encoder.encode(img)

    def encode_image(self, img: np.ndarray) -> np.ndarray:
        return self.encoder.encode(img)

    def encode_text(self, text: str) -> np.ndarray:
        features = self._client.encode_text(text)
        if features.shape != (self.encoder.feature_dim,):
            raise BridgeProtocolError(
                f"encode_text returned shape {features.shape}, "
                f"expected ({self.encoder.feature_dim},)"
            )
        return features

    def identity(self) -> str:
        return (
            f"bridge:{self._models},feat{self.encoder.feature_dim},"
            f"latent{self.shape.total},img{self.generator.image_size}"
        )

    def objective(self, target: np.ndarray, cutouts: CutoutPolicy | None = None) -> Objective:
        return Objective(
            generator=self.generator,
            encoder=self.encoder,
            target=target,
            cutouts=cutouts if cutouts is not None else CutoutPolicy(),
            grad_fn=self.loss_and_grad,
        )

    def loss_and_grad(
        self, code: LatentCode, target: np.ndarray, policy: CutoutPolicy, iteration: int
    ) -> tuple[float, np.ndarray]:
        if code.shape != self.shape:
            raise ShapeError(f"latent shape {code.shape} does not match backend {self.shape}")
        fitness, gradient = self._client.generate_with_grad(
            flatten(code),
            np.asarray(target, dtype=np.float64),
            {
                "num_cuts": policy.num_cuts,
                "min_fraction": policy.min_fraction,
                "max_fraction": policy.max_fraction,
                "resize_to": policy.resize_to,
                "seed_stream": policy.seed_stream,
                "iteration": iteration,
            },
        )
        return -fitness, gradient
