"""Model-bridge server: deterministic stand-in models behind the
latent-search wire protocol.

Serves a text encoder, an image encoder, and a conditional image
generator over line-delimited JSON (ops: encode_text, encode_image,
generate, generate_with_grad, info). Start it with ``latentbridge
--port N`` or ``latentbridge --stdio`` (``python -m latentbridge``
works too); library users can assemble the pieces directly.
"""

from .models import (
    ENCODER_INPUT,
    FEATURE_DIM,
    HIDDEN_BLOCKS,
    HIDDEN_DIM,
    LATENT_DIM,
    LATENT_TOTAL,
    MODELS_ID,
    NUM_LAYERS,
    RESOLUTION,
    TEXT_BUCKETS,
    WEIGHTS_FILE,
    ModelStack,
    cache_dir,
    load_weights,
    synthesize_weights,
    text_bag,
)
from .objective import (
    MAX_CUTS,
    MAX_RESIZE,
    CutConfig,
    cut_config_from_payload,
    resize_image,
    resize_matrix,
    sample_windows,
    score_with_grad,
)
from .server import MAX_LINE_BYTES, BridgeServer, main, serve_stdio
from .service import ModelService
from .wire import WireError, decode_tensor, encode_tensor

__version__ = "0.1.0"

__all__ = [
    "BridgeServer",
    "CutConfig",
    "ENCODER_INPUT",
    "FEATURE_DIM",
    "HIDDEN_BLOCKS",
    "HIDDEN_DIM",
    "LATENT_DIM",
    "LATENT_TOTAL",
    "MAX_CUTS",
    "MAX_LINE_BYTES",
    "MAX_RESIZE",
    "MODELS_ID",
    "ModelService",
    "ModelStack",
    "NUM_LAYERS",
    "RESOLUTION",
    "TEXT_BUCKETS",
    "WEIGHTS_FILE",
    "WireError",
    "cache_dir",
    "cut_config_from_payload",
    "decode_tensor",
    "encode_tensor",
    "load_weights",
    "main",
    "resize_image",
    "resize_matrix",
    "sample_windows",
    "score_with_grad",
    "serve_stdio",
    "synthesize_weights",
    "text_bag",
]
