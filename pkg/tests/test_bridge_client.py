import threading

import numpy as np
import pytest

from fake_bridge import ANCHOR, LATENT_TOTAL, RESOLUTION, start_fake_server
from latentsearch.bridge_client import (
    BridgeBackend,
    BridgeClient,
    decode_tensor,
    encode_tensor,
)
from latentsearch.errors import BridgeProtocolError, EvaluationError
from latentsearch.latent import LatentInit, new_latent, unflatten
from latentsearch.objective import CutoutPolicy
from latentsearch.strategies import AdamConfig, Budget, run_adam


@pytest.fixture(scope="module")
def server():
    srv = start_fake_server()
    yield srv
    srv.shutdown()


@pytest.fixture()
def client(server):
    c = BridgeClient.connect(server.endpoint)
    yield c
    c.close()


@pytest.fixture()
def backend(server):
    b = BridgeBackend.connect(server.endpoint)
    yield b
    b.close()


class TestTensorCodec:
    def test_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(0)
        for shape in [(7,), (3, 5), (2, 3, 4), ()]:
            original = rng.standard_normal(shape).astype("<f4")
            wire = encode_tensor(original)
            decoded = decode_tensor(wire)
            assert decoded.shape == original.shape
            assert np.array_equal(decoded.astype("<f4"), original)
            assert encode_tensor(decoded)["data"] == wire["data"]

    def test_malformed_tensors_rejected(self):
        with pytest.raises(BridgeProtocolError):
            decode_tensor({"shape": [2]})
        with pytest.raises(BridgeProtocolError):
            decode_tensor({"shape": [2], "data": "!!!not-base64!!!"})
        with pytest.raises(BridgeProtocolError):
            decode_tensor({"shape": "nope", "data": ""})
        with pytest.raises(BridgeProtocolError):
            decode_tensor(None)

    def test_element_count_must_match_shape(self):
        wire = encode_tensor(np.zeros(4, dtype=np.float32))
        wire["shape"] = [5]
        with pytest.raises(BridgeProtocolError, match="5"):
            decode_tensor(wire)


class TestClientOps:
    def test_info(self, client):
        info = client.info()
        assert info["latent_total"] == LATENT_TOTAL
        assert info["image_resolution"] == RESOLUTION

    def test_encode_text_deterministic_unit(self, client):
        one = client.encode_text("a bowl of fruit")
        two = client.encode_text("a bowl of fruit")
        assert one.shape == (8,)
        assert np.linalg.norm(one) == pytest.approx(1.0, abs=1e-5)
        assert np.array_equal(one, two)

    def test_empty_text_is_error(self, client):
        with pytest.raises(EvaluationError, match="non-empty"):
            client.encode_text("")

    def test_generate_shape_and_bounds(self, client):
        image = client.generate(np.zeros(LATENT_TOTAL))
        assert image.shape == (RESOLUTION, RESOLUTION, 3)
        assert image.min() >= 0.0 and image.max() <= 1.0

    def test_wrong_latent_length_is_error(self, client):
        with pytest.raises(EvaluationError, match=str(LATENT_TOTAL)):
            client.generate(np.zeros(LATENT_TOTAL - 1))

    def test_grad_round_trip(self, client):
        latent = np.zeros(LATENT_TOTAL)
        target = client.encode_text("anything")
        fitness, grad = client.generate_with_grad(latent, target, {"iteration": 0})
        expected_fitness = -float(np.mean(ANCHOR**2))
        assert fitness == pytest.approx(expected_fitness, abs=1e-6)
        assert grad.shape == (LATENT_TOTAL,)
        assert np.allclose(grad, -2.0 * ANCHOR / LATENT_TOTAL, atol=1e-6)

    def test_bad_json_response_is_protocol_error(self, client):
        with pytest.raises(BridgeProtocolError, match="JSON"):
            client._call("test_bad_json", {})

    def test_wrong_id_is_protocol_error(self, client):
        with pytest.raises(BridgeProtocolError, match="echo"):
            client._call("test_wrong_id", {})

    def test_bad_endpoint_strings(self):
        with pytest.raises(BridgeProtocolError):
            BridgeClient.connect("no-port-here")
        with pytest.raises(BridgeProtocolError):
            BridgeClient.connect("stdio:")


class TestBridgeBackend:
    def test_shape_from_info(self, backend):
        assert backend.shape.total == LATENT_TOTAL
        assert backend.identity().startswith("bridge:fake-clip+fake-gan")

    def test_fitness_composes_generate_and_encode(self, backend):
        policy = CutoutPolicy(num_cuts=2, min_fraction=1.0, max_fraction=1.0, resize_to=RESOLUTION)
        target = backend.encode_text("a test target")
        objective = backend.objective(target, policy)
        code = new_latent(backend.shape, LatentInit(seed=4))
        value = objective.fitness(code)
        image = backend.generate(code)
        expected = float(np.dot(backend.encode_image(image), target))
        assert value == pytest.approx(expected, abs=1e-6)

    def test_adam_runs_end_to_end_with_monotone_best(self, backend):
        policy = CutoutPolicy(num_cuts=1, min_fraction=1.0, max_fraction=1.0, resize_to=RESOLUTION)
        objective = backend.objective(backend.encode_text("target"), policy)
        init = new_latent(backend.shape, LatentInit(seed=11))
        record = run_adam(objective, init, AdamConfig(iterations=10, lr=0.1), Budget(10))
        assert record.evaluations == 10
        assert (np.diff(record.best_fitness_trace) >= 0).all()
        # the fake's grad op scores a quadratic bowl, so ten steps must improve on the start
        assert record.final_fitness > record.best_fitness_trace[0]


def test_stdio_transport(tmp_path):
    script = tmp_path / "mini_bridge.py"
    script.write_text(
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    msg = json.loads(line)\n"
        "    sys.stdout.write(json.dumps({'id': msg['id'], 'result': {'pong': True}}) + '\\n')\n"
        "    sys.stdout.flush()\n"
    )
    client = BridgeClient.connect(f"stdio:python3 {script}")
    try:
        assert client._call("info", {}) == {"pong": True}
    finally:
        client.close()


def test_shared_client_is_thread_safe(server):
    # parallel runs share one connection; racing calls must not cross wires
    solo = BridgeClient.connect(server.endpoint)
    try:
        expected = {n: solo.encode_text(f"prompt {n}") for n in range(4)}
    finally:
        solo.close()

    shared = BridgeClient.connect(server.endpoint)
    failures = []

    def worker(n):
        try:
            for _ in range(10):
                if not np.array_equal(shared.encode_text(f"prompt {n}"), expected[n]):
                    failures.append(f"thread {n} received another request's answer")
                    return
        except Exception as exc:
            failures.append(f"thread {n}: {exc!r}")

    threads = [threading.Thread(target=worker, args=(n,)) for n in range(4)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    shared.close()
    assert not failures, failures
