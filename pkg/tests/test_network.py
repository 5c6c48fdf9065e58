import json

import numpy as np
import pytest

from cdnet.layers import LayerSpec, mse_loss, softmax_cross_entropy
from cdnet.network import MODEL_FORMAT, Network, NetworkSpec, cd_mlp_spec, dense_mlp_spec
from cdnet.regularization import ShannonDropoutConfig


@pytest.fixture(params=["dense", "cd4", "cd8"])
def net(request):
    spec = {"dense": dense_mlp_spec(), "cd4": cd_mlp_spec(4), "cd8": cd_mlp_spec(8)}[request.param]
    return Network.init(spec, np.random.default_rng(0))


def test_spec_rejects_broken_chain():
    with pytest.raises(ValueError):
        NetworkSpec((LayerSpec("dense", 4, 8), LayerSpec("dense", 6, 10)))


def test_cd_output_padding():
    assert cd_mlp_spec(4).n_out == 12
    assert cd_mlp_spec(8).n_out == 16
    assert cd_mlp_spec(8).n_classes == 10


def test_logits_are_sliced(net):
    logits, _ = net.forward(np.random.default_rng(1).random((3, 64)))
    assert logits.shape == (3, 10)


def test_param_count_matches_arrays(net):
    assert net.num_params == sum(a.size for a in net.arrays())


@pytest.mark.parametrize("loss_fn", [mse_loss, softmax_cross_entropy])
def test_full_network_gradient(net, loss_fn):
    rng = np.random.default_rng(2)
    x = rng.random((4, 64))
    t = np.eye(10)[rng.integers(0, 10, 4)]
    logits, tape = net.forward(x)
    _, d = loss_fn(logits, t)
    grads = net.backward(tape, d)
    arrays = net.arrays()
    h = 1e-6
    for a, g in zip(arrays, grads):
        assert a.shape == g.shape
        for flat in rng.choice(a.size, size=min(5, a.size), replace=False):
            idx = np.unravel_index(flat, a.shape)
            orig = a[idx]
            a[idx] = orig + h
            up = loss_fn(net.forward(x)[0], t)[0]
            a[idx] = orig - h
            down = loss_fn(net.forward(x)[0], t)[0]
            a[idx] = orig
            num = (up - down) / (2 * h)
            assert abs(num - g[idx]) <= 1e-5 * max(1.0, abs(num))


def test_gradient_with_dropout_uses_same_mask(net):
    cfg = ShannonDropoutConfig(rate=0.2, enabled=True)
    rng = np.random.default_rng(3)
    x = rng.random((4, 64))
    t = np.eye(10)[rng.integers(0, 10, 4)]

    def loss():
        return softmax_cross_entropy(net.forward(x, cfg, np.random.default_rng(9))[0], t)[0]

    logits, tape = net.forward(x, cfg, np.random.default_rng(9))
    grads = net.backward(tape, softmax_cross_entropy(logits, t)[1], cfg)
    a, g = net.arrays()[0], grads[0]
    h = 1e-6
    for idx in [(0, 0, 0), (1, 2, 0)] if a.ndim == 3 else [(0, 0), (3, 5)]:
        orig = a[idx]
        a[idx] = orig + h
        up = loss()
        a[idx] = orig - h
        down = loss()
        a[idx] = orig
        assert (up - down) / (2 * h) == pytest.approx(g[idx], rel=1e-5, abs=1e-9)


def test_json_round_trip(net, tmp_path):
    path = tmp_path / "m.json"
    net.save(path)
    data = json.loads(path.read_text())
    assert data["format"] == MODEL_FORMAT
    back = Network.load(path)
    assert back.spec == net.spec
    for a, b in zip(net.arrays(), back.arrays()):
        np.testing.assert_array_equal(a, b)
    x = np.random.default_rng(4).random((2, 64))
    np.testing.assert_array_equal(net.forward(x)[0], back.forward(x)[0])


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        Network.from_dict({"format": "other/9", "layers": []})


def test_weight_layer_inputs_feed_forward(net):
    x = np.random.default_rng(5).random((3, 64))
    inputs = net.weight_layer_inputs(x)
    assert len(inputs) == 3
    np.testing.assert_array_equal(inputs[0][3], x)
    assert np.all(inputs[1][3] >= 0)  # post-ReLU
