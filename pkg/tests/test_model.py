import struct

import numpy as np
import pytest

from trimine.core import Rng
from trimine.errors import FormatError, UsageError
from trimine.gradcheck import check_full_chain
from trimine.losses.common import LossKind
from trimine.model import (
    Head,
    ModelParams,
    backward,
    embed,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)


@pytest.fixture
def params():
    return init_params(5, Rng(0), hidden_widths=(7, 6), embedding_dim=3, class_count=4)


class TestForward:
    def test_output_shapes(self, params):
        X = np.random.default_rng(0).standard_normal((10, 5))
        assert forward(params, X)[0].shape == (10, 3)
        assert forward(params, X, Head.CLASSIFIER)[0].shape == (10, 4)
        assert embed(params, X).shape == (10, 3)

    def test_zero_weights_give_the_bias(self, params):
        tensors = {k: (np.zeros_like(v) if k.endswith("weight") else v) for k, v in params.tensors.items()}
        tensors["layer2.bias"] = np.array([0.5, -1.0, 2.0])
        zeroed = ModelParams(tensors, params.layer_sizes, params.class_count)
        Y = embed(zeroed, np.random.default_rng(1).standard_normal((4, 5)))
        np.testing.assert_array_equal(Y, np.tile([0.5, -1.0, 2.0], (4, 1)))

    def test_identity_layer(self):
        identity = ModelParams({"layer0.weight": np.eye(3), "layer0.bias": np.zeros(3)}, (3, 3))
        X = np.random.default_rng(2).standard_normal((6, 3))
        np.testing.assert_array_equal(embed(identity, X), X)

    def test_input_width_mismatch(self, params):
        with pytest.raises(UsageError, match="n x 5"):
            forward(params, np.zeros((2, 4)))

    def test_no_classifier_head(self, params):
        with pytest.raises(UsageError, match="no classifier"):
            forward(params.without_classifier(), np.zeros((2, 5)), Head.CLASSIFIER)


class TestParams:
    def test_initialization(self, params):
        assert params.names() == [
            "layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias",
            "layer2.weight", "layer2.bias", "classifier.weight", "classifier.bias",
        ]
        assert params.tensors["layer1.weight"].shape == (6, 7)
        assert not np.any(params.tensors["layer0.bias"])
        assert params.input_dim == 5 and params.embedding_dim == 3 and params.trunk_depth == 3

    def test_same_stream_same_params(self):
        a = init_params(4, Rng(9), (3,), 2)
        b = init_params(4, Rng(9), (3,), 2)
        for name in a.names():
            assert np.array_equal(a.tensors[name], b.tensors[name])

    def test_without_classifier(self, params):
        trunk = params.without_classifier()
        assert not trunk.has_classifier
        assert "classifier.weight" not in trunk.tensors
        X = np.random.default_rng(3).standard_normal((3, 5))
        np.testing.assert_array_equal(embed(trunk, X), embed(params, X))

    def test_shape_validation(self):
        with pytest.raises(UsageError, match="layer0.weight"):
            ModelParams({"layer0.weight": np.zeros((2, 3)), "layer0.bias": np.zeros(3)}, (3, 3))

    def test_missing_parameter(self):
        with pytest.raises(UsageError):
            ModelParams({"layer0.weight": np.zeros((3, 3))}, (3, 3))

    def test_copy_is_independent(self, params):
        clone = params.copy()
        clone.tensors["layer0.weight"][0, 0] += 1.0
        assert clone.tensors["layer0.weight"][0, 0] != params.tensors["layer0.weight"][0, 0]


class TestBackward:
    def test_classifier_grads_are_zero_under_the_embedding_head(self, params):
        X = np.random.default_rng(4).standard_normal((5, 5))
        Y, cache = forward(params, X)
        grads = backward(params, cache, np.ones_like(Y))
        assert not np.any(grads["classifier.weight"])
        assert np.any(grads["layer0.weight"])

    def test_classifier_head_matches_finite_differences(self, params):
        X = np.random.default_rng(5).standard_normal((4, 5))
        G = np.random.default_rng(6).standard_normal((4, 4))
        scores, cache = forward(params, X, Head.CLASSIFIER)
        grads = backward(params, cache, G)
        h = 1e-6
        for name in ("classifier.weight", "layer0.weight", "layer1.bias"):
            array = params.tensors[name]
            flat = array.reshape(-1)
            for i in range(0, flat.size, 3):
                original = flat[i]
                flat[i] = original + h
                upper = np.sum(G * forward(params, X, Head.CLASSIFIER)[0])
                flat[i] = original - h
                lower = np.sum(G * forward(params, X, Head.CLASSIFIER)[0])
                flat[i] = original
                assert grads[name].reshape(-1)[i] == pytest.approx((upper - lower) / (2 * h), abs=1e-6)

    @pytest.mark.parametrize("kind", [LossKind.BA, LossKind.NCA, LossKind.EP, LossKind.EPHN], ids=lambda k: k.value)
    def test_full_chain_gradients(self, kind):
        row = check_full_chain(kind, seed=2)
        assert row.target == "parameters"
        assert row.passed, f"{kind.value}: {row.max_relative_error:.3e}"


class TestCheckpoint:
    def test_round_trip(self, params, tmp_path):
        path = tmp_path / "model.tmmp"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.layer_sizes == params.layer_sizes
        assert loaded.class_count == 4
        for name in params.names():
            assert np.array_equal(loaded.tensors[name], params.tensors[name])

    def test_round_trip_without_classifier(self, params, tmp_path):
        path = tmp_path / "trunk.tmmp"
        save_checkpoint(params.without_classifier(), path)
        loaded = load_checkpoint(path)
        assert not loaded.has_classifier
        assert loaded.layer_sizes == (5, 7, 6, 3)

    def test_bad_magic(self, params, tmp_path):
        path = tmp_path / "model.tmmp"
        save_checkpoint(params, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError) as excinfo:
            load_checkpoint(path)
        assert excinfo.value.offset == 0

    def test_unsupported_version(self, params, tmp_path):
        path = tmp_path / "model.tmmp"
        save_checkpoint(params, path)
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError) as excinfo:
            load_checkpoint(path)
        assert excinfo.value.offset == 4

    def test_truncated_payload(self, params, tmp_path):
        path = tmp_path / "model.tmmp"
        save_checkpoint(params, path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(FormatError, match="payload length") as excinfo:
            load_checkpoint(path)
        assert excinfo.value.offset == len(data) - 8

    def test_inconsistent_layer_widths(self, params, tmp_path):
        path = tmp_path / "model.tmmp"
        save_checkpoint(params, path)
        data = bytearray(path.read_bytes())
        # second layer claims 9 inputs although the first layer emits 7
        data[16 + 8 + 4:16 + 8 + 8] = struct.pack("<I", 9)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="layer 1"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError, match="not found"):
            load_checkpoint(tmp_path / "absent.tmmp")
