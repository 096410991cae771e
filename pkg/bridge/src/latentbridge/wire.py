"""Tensor codec for the bridge wire format.

Messages are one UTF-8 JSON object per line: requests carry
``{"id": <int>, "op": <str>, "payload": <object>}`` and responses echo
the id with either a ``result`` or an ``error`` field. Tensors travel
as ``{"shape": [<ints>], "data": <base64>}``, the data holding the
elements as little-endian 32-bit floats in C order. Encoding narrows
to float32 and decoding upcasts to float64, so a float32 round trip
through the codec is bit-exact.
"""

from __future__ import annotations

import base64
import math

import numpy as np


class WireError(ValueError):
    """A message or tensor that does not follow the wire format."""


def encode_tensor(array) -> dict:
    """Pack an array as a wire tensor."""
    array = np.asarray(array, dtype="<f4")
    return {
        "shape": list(array.shape),
        "data": base64.b64encode(array.tobytes(order="C")).decode("ascii"),
    }


def decode_tensor(obj) -> np.ndarray:
    """Unpack a wire tensor into a float64 array.

    Raises :class:`WireError` when the object is not a tensor, the
    base64 is broken, or the declared shape does not match the element
    count. Shape arithmetic runs on Python ints, so absurd dimension
    values fail the count check instead of overflowing.
    """
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise WireError(f"malformed tensor: {obj!r}")
    shape = obj["shape"]
    if not isinstance(shape, list) or not all(
        isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape
    ):
        raise WireError(f"malformed tensor shape: {shape!r}")
    if not isinstance(obj["data"], str):
        raise WireError(f"tensor data must be a base64 string, got {type(obj['data']).__name__}")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except (ValueError, TypeError) as exc:
        raise WireError(f"tensor data is not valid base64: {exc}") from None
    if len(raw) % 4:
        raise WireError(f"tensor data length {len(raw)} is not a multiple of 4")
    flat = np.frombuffer(raw, dtype="<f4")
    expected = math.prod(shape)
    if flat.size != expected:
        raise WireError(
            f"tensor has {flat.size} elements but shape {shape} implies {expected}"
        )
    return flat.reshape(shape).astype(np.float64)
