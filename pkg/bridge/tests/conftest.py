"""Shared fixtures: one model stack and one live TCP server per session.

Weights are synthesized into a session temp directory so tests never
touch (or depend on) the user's real cache.
"""

import threading

import pytest

from latentbridge import BridgeServer, ModelService, ModelStack


@pytest.fixture(scope="session")
def weights_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("weights")


@pytest.fixture(scope="session")
def stack(weights_dir):
    return ModelStack.load(weights_dir)


@pytest.fixture(scope="session")
def service(stack):
    return ModelService(stack)


@pytest.fixture(scope="session")
def bridge_server(service):
    server = BridgeServer(("127.0.0.1", 0), service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


@pytest.fixture(scope="session")
def endpoint(bridge_server):
    host, port = bridge_server.server_address
    return f"{host}:{port}"
