"""Socket and stdio front ends plus the command-line entry point.

TCP mode serves each connection on its own thread; within a connection
requests are handled strictly one at a time in arrival order, which is
the protocol's in-flight contract. stdio mode speaks the same protocol
over standard streams for subprocess embedding: responses on stdout,
diagnostics on stderr. Request lines are capped at 16 MiB; a longer
line is answered with a single error response and discarded so a
hostile peer cannot buffer the server into the ground.

Weights load once, before any traffic is accepted, and are never
mutated afterwards, so concurrent connections share them freely.
"""

from __future__ import annotations

import argparse
import json
import socketserver
import sys

from .models import ModelStack, cache_dir
from .service import ModelService

MAX_LINE_BYTES = 16 * 1024 * 1024

_OVERSIZE = (
    json.dumps({"id": None, "error": f"request line exceeds {MAX_LINE_BYTES} bytes"}).encode("utf-8")
    + b"\n"
)


def _drain_line(reader) -> None:
    # swallow the rest of an oversized line so framing recovers
    while True:
        chunk = reader.readline(MAX_LINE_BYTES)
        if not chunk or chunk.endswith(b"\n"):
            return


def _serve_stream(service: ModelService, reader, writer) -> None:
    """Shared request loop for socket files and standard streams."""
    while True:
        raw = reader.readline(MAX_LINE_BYTES + 1)
        if not raw:
            return
        if len(raw) > MAX_LINE_BYTES and not raw.endswith(b"\n"):
            _drain_line(reader)
            writer.write(_OVERSIZE)
        else:
            writer.write(service.handle_line(raw))
        writer.flush()


class _ConnectionHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        try:
            _serve_stream(self.server.service, self.rfile, self.wfile)
        except OSError:
            return  # peer went away mid-message; nothing left to answer


class BridgeServer(socketserver.ThreadingTCPServer):
    """One thread per connection; the service and its weights are shared."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: ModelService):
        super().__init__(address, _ConnectionHandler)
        self.service = service


def serve_stdio(service: ModelService, reader=None, writer=None) -> None:
    """Serve one session over standard streams (or injected ones)."""
    _serve_stream(
        service,
        reader if reader is not None else sys.stdin.buffer,
        writer if writer is not None else sys.stdout.buffer,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="latentbridge",
        description=(
            "Serve the bridge model stack (text encoder, image encoder, "
            "conditional generator) over the line-delimited JSON protocol. "
            "Weights live under $MODEL_CACHE_DIR."
        ),
    )
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument(
        "--port", type=int, metavar="N",
        help="listen for TCP connections on 127.0.0.1:N (0 picks a free port)",
    )
    mode.add_argument(
        "--stdio", action="store_true",
        help="serve a single session over stdin/stdout",
    )
    args = parser.parse_args(argv)

    try:
        stack = ModelStack.load()
    except OSError as exc:
        print(f"error: cannot prepare weights under {cache_dir()}: {exc}", file=sys.stderr)
        return 1
    service = ModelService(stack)

    if args.stdio:
        print(f"latentbridge: serving {stack.info()['models']} on stdio", file=sys.stderr)
        try:
            serve_stdio(service)
        except OSError as exc:
            print(f"error: stdio stream failed: {exc}", file=sys.stderr)
            return 1
        return 0

    try:
        server = BridgeServer(("127.0.0.1", args.port), service)
    except (OSError, OverflowError) as exc:
        print(f"error: cannot listen on port {args.port}: {exc}", file=sys.stderr)
        return 1
    with server:
        host, port = server.server_address
        print(f"listening on {host}:{port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0
