import numpy as np
import pytest

from sim2real import autodiff as ad
from sim2real import nn
from sim2real.autodiff import Tensor
from sim2real.errors import ConfigError, ContractError, NumericError, ValidationError


class SmallNet(nn.Module):
    def __init__(self, rng):
        self.l1 = nn.Linear(5, 4, "l1", rng)
        self.l2 = nn.Linear(4, 3, "l2", rng)

    def forward(self, x):
        return self.l2(self.l1(x).relu()).sigmoid()


def test_layer_forward_dispatch(rng):
    x = Tensor(rng.normal(size=(2, 5)))
    w = nn.Parameter("w", rng.normal(size=(5, 3)))
    b = nn.Parameter("b", np.zeros(3))
    out = nn.layer_forward("linear", x, params=(w, b))
    np.testing.assert_allclose(out.data, x.data @ w.data)
    assert nn.layer_forward("relu", Tensor([-2.0, 3.0])).data.tolist() == [0.0, 3.0]
    assert nn.layer_forward("sigmoid", Tensor([0.0])).data[0] == 0.5
    assert nn.layer_forward("tanh", Tensor([0.0])).data[0] == 0.0


def test_layer_forward_conv_and_pool(rng):
    x = Tensor(rng.normal(size=(1, 2, 4, 4)))
    w = nn.Parameter("w", rng.normal(size=(3, 2, 3, 3)))
    b = nn.Parameter("b", np.zeros(3))
    out = nn.layer_forward("conv2d", x, params=(w, b), config={"stride": 1, "padding": 1})
    assert out.data.shape == (1, 3, 4, 4)
    pooled = nn.layer_forward("maxpool2d", out, config={"k": 2})
    assert pooled.data.shape == (1, 3, 2, 2)


def test_layer_forward_rejects_nonfinite(rng):
    bad = Tensor.__new__(Tensor)
    bad.data = np.array([np.nan])
    bad.grad = None
    bad.requires_grad = False
    bad._parents = ()
    bad._backward = None
    with pytest.raises(NumericError):
        nn.layer_forward("relu", bad)


def test_layer_forward_unknown_kind(rng):
    with pytest.raises(ContractError):
        nn.layer_forward("softplus", Tensor([1.0]))


def test_sgd_definition():
    p = nn.Parameter("p", [1.0])
    p.tensor.grad = np.array([0.5])
    nn.Sgd([p], lr=0.1).step()
    assert p.data[0] == pytest.approx(0.95, abs=1e-15)


def test_sgd_pure_decay():
    p = nn.Parameter("p", [1.0], weight_decay=0.1)
    p.tensor.grad = np.array([0.0])
    nn.Sgd([p], lr=0.1).step()
    assert p.data[0] == pytest.approx(0.99, abs=1e-15)


@pytest.mark.parametrize("g", [1e-3, 1.0, 1e3])
def test_adam_first_step_magnitude(g):
    # bias-corrected first step: lr * g / (|g| + eps) ~ lr * sign(g)
    p = nn.Parameter("p", [2.0])
    p.tensor.grad = np.array([g])
    nn.Adam([p], lr=0.01).step()
    assert abs(p.data[0] - 2.0) == pytest.approx(0.01, rel=1e-4)


def test_optimizer_zero_lr_is_identity(rng):
    for kind in ("sgd", "adam"):
        p = nn.Parameter("p", rng.normal(size=4), weight_decay=0.5)
        before = p.data.copy()
        p.tensor.grad = rng.normal(size=4)
        opt = nn.make_optimizer(kind, [p], lr=0.0)
        opt.step()
        opt.step()
        assert np.array_equal(p.data, before)


def test_optimizer_missing_grad_contract():
    p = nn.Parameter("p", [1.0])
    with pytest.raises(ContractError):
        nn.Sgd([p], 0.1).step()


def test_optimizer_step_functional_threads_state():
    p = nn.Parameter("p", [1.0])
    p.tensor.grad = np.array([1.0])
    state = nn.optimizer_step("adam", [p], lr=0.1)
    p.tensor.grad = np.array([1.0])
    state2 = nn.optimizer_step("adam", [p], lr=0.1, state=state)
    assert state2 is state and state.t == 2


def test_check_gradients_linear(rng):
    net = SmallNet(rng)
    err = nn.check_gradients(net, Tensor(rng.normal(size=(3, 5))), h=1e-4)
    assert err < 1e-6


def test_check_gradients_sigmoid_scalar():
    class One(nn.Module):
        def __init__(self):
            self.w = nn.Parameter("w", [0.0])

        def forward(self, x):
            return (self.w.tensor * x).sigmoid()

    err = nn.check_gradients(One(), Tensor([1.0]), h=1e-3)
    assert err < 1e-6


def test_check_gradients_relu_away_from_kink(rng):
    class R(nn.Module):
        def __init__(self):
            self.w = nn.Parameter("w", [2.0, -3.0])

        def forward(self, x):
            return (self.w.tensor * x).relu()

    err = nn.check_gradients(R(), Tensor([1.0, 1.0]), h=1e-4)
    assert err < 1e-6


@pytest.mark.parametrize("kind", ["linear", "conv2d", "maxpool2d", "relu", "tanh", "sigmoid"])
def test_check_gradients_every_layer_kind(kind, rng):
    class Probe(nn.Module):
        def __init__(self):
            self.conv = nn.Conv2d(2, 3, 3, "conv", rng, padding=1)
            self.lin = nn.Linear(8, 4, "lin", rng)

        def forward(self, x):
            if kind == "linear":
                return self.lin(x.reshape(x.data.shape[0], -1))
            h = self.conv(x)
            if kind == "conv2d":
                return h
            if kind == "maxpool2d":
                return ad.maxpool2d(h, 2)
            if kind == "relu":
                return (h + 0.3).relu()  # offset keeps probes off the kink
            if kind == "tanh":
                return h.tanh()
            return h.sigmoid()

    x = Tensor(rng.uniform(0.1, 0.9, (2, 2, 2, 2)))
    assert nn.check_gradients(Probe(), x, h=1e-4) < 1e-5


def test_check_gradients_h_range():
    with pytest.raises(ConfigError):
        nn.check_gradients(SmallNet(np.random.default_rng(0)), Tensor(np.ones((1, 5))), h=0.5)


def test_weights_roundtrip_bitwise(tmp_path, rng):
    net = SmallNet(rng)
    path = tmp_path / "w.gsrt"
    nn.save_weights(path, net.parameters())
    first = path.read_bytes()
    nn.assign_weights(net, nn.load_weights(path))
    nn.save_weights(path, net.parameters())
    assert path.read_bytes() == first


def test_weights_loaded_values_exact(tmp_path, rng):
    net = SmallNet(rng)
    path = tmp_path / "w.gsrt"
    nn.save_weights(path, net.parameters())
    loaded = nn.load_weights(path)
    for p in net.parameters():
        assert np.array_equal(loaded[p.name], p.data)


def test_weights_bad_magic(tmp_path):
    path = tmp_path / "bad.gsrt"
    path.write_bytes(b"NOPE" + b"\x00" * 8)
    with pytest.raises(ValidationError):
        nn.load_weights(path)


def test_weights_name_mismatch(tmp_path, rng):
    net = SmallNet(rng)
    path = tmp_path / "w.gsrt"
    nn.save_weights(path, net.parameters())
    other = SmallNet(rng)
    other.l1 = nn.Linear(5, 4, "renamed", rng)
    with pytest.raises(ValidationError):
        nn.assign_weights(other, nn.load_weights(path))


def test_duplicate_parameter_names_rejected(rng):
    p1 = nn.Parameter("same", [1.0])
    p2 = nn.Parameter("same", [2.0])
    with pytest.raises(ConfigError):
        nn.check_unique_names([p1, p2])


def test_negative_weight_decay_rejected():
    with pytest.raises(ConfigError):
        nn.Parameter("p", [1.0], weight_decay=-0.1)
