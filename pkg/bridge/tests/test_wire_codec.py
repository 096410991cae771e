import base64

import numpy as np
import pytest

from latentbridge.wire import WireError, decode_tensor, encode_tensor


class TestRoundTrip:
    def test_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(0)
        for shape in [(), (1,), (7,), (3, 5), (2, 3, 4), (0,), (0, 3)]:
            original = rng.standard_normal(shape).astype("<f4")
            decoded = decode_tensor(encode_tensor(original))
            assert decoded.shape == original.shape
            assert decoded.dtype == np.float64
            assert decoded.astype("<f4").tobytes() == original.tobytes()

    def test_special_values_keep_their_bits(self):
        special = np.array([0.0, -0.0, np.inf, -np.inf, np.nan, 1e-45], dtype="<f4")
        decoded = decode_tensor(encode_tensor(special))
        assert decoded.astype("<f4").tobytes() == special.tobytes()

    def test_float64_input_narrows_to_float32(self):
        decoded = decode_tensor(encode_tensor(np.array([1.0 + 1e-12])))
        assert decoded[0] == np.float32(1.0 + 1e-12)


class TestRejection:
    @pytest.mark.parametrize(
        "obj",
        [
            None,
            7,
            "tensor",
            [],
            {"shape": [2]},
            {"data": ""},
            {"shape": "no", "data": ""},
            {"shape": [2, -1], "data": ""},
            {"shape": [True], "data": ""},
            {"shape": [2.0], "data": ""},
            {"shape": [1], "data": 5},
        ],
    )
    def test_malformed_tensors(self, obj):
        with pytest.raises(WireError):
            decode_tensor(obj)

    def test_bad_base64(self):
        with pytest.raises(WireError, match="base64"):
            decode_tensor({"shape": [1], "data": "!!!"})

    def test_data_length_must_be_multiple_of_four(self):
        data = base64.b64encode(b"abc").decode("ascii")
        with pytest.raises(WireError, match="multiple of 4"):
            decode_tensor({"shape": [1], "data": data})

    def test_element_count_must_match_shape(self):
        wire = encode_tensor(np.zeros(4, dtype=np.float32))
        wire["shape"] = [5]
        with pytest.raises(WireError, match="implies 5"):
            decode_tensor(wire)

    def test_huge_shape_fails_before_allocating(self):
        with pytest.raises(WireError, match="implies"):
            decode_tensor({"shape": [10**30, 10**30], "data": ""})
