import numpy as np
import pytest

from gradcheck import gradient_check
from stabledeblur.errors import DimensionError, InvalidParameterError, TrainingDivergedError
from stabledeblur.network import (
    Adam,
    AdamState,
    BatchNorm2d,
    Conv2d,
    MiniUNet,
    ReLU,
    SSNet3L,
    TrainConfig,
    adam_step,
    backward,
    build_mini_unet,
    build_ssnet3l,
    forward,
    load_checkpoint,
    read_loss_history,
    save_checkpoint,
    train,
    write_loss_history,
)


def fd_check(model, y, target, mode):
    worst, _, skipped = gradient_check(model, y, target, mode)
    assert skipped == 0
    return worst


def _warm_bn(model, y):
    # move running statistics away from (0, 1) so eval mode is a real test
    for _ in range(3):
        model.forward(y[:, None], train=True)


@pytest.mark.parametrize("mode", ["train", "eval"])
@pytest.mark.parametrize("padding", ["zero", "periodic"])
def test_ssnet_gradients(mode, padding):
    rng = np.random.default_rng(0)
    y = rng.random((2, 8, 8))
    t = rng.random((2, 8, 8))
    m = SSNet3L(widths=(4, 4), seed=1, padding=padding)
    _warm_bn(m, y)
    assert fd_check(m, y, t, mode) < 1e-4


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_mini_unet_gradients(mode):
    rng = np.random.default_rng(1)
    y = rng.random((2, 8, 8))
    t = rng.random((2, 8, 8))
    m = MiniUNet(base_width=2, seed=2)
    _warm_bn(m, y)
    assert fd_check(m, y, t, mode) < 1e-4


def test_ssnet_skip_gradients():
    rng = np.random.default_rng(2)
    y, t = rng.random((2, 2, 8, 8))
    m = SSNet3L(widths=(3, 2), kernel_sizes=(3, 3, 3), seed=3, skip=True)
    assert fd_check(m, y, t, "train") < 1e-4


def test_parameter_count_128():
    w = 128
    conv1 = 9 * 9 * 1 * w + w
    conv2 = 5 * 5 * w * w + w
    conv3 = 3 * 3 * w * 1 + 1
    bn = 2 * w + 2 * w
    expected = conv1 + conv2 + conv3 + bn
    assert conv1 + conv2 + conv3 == 421_377
    assert build_ssnet3l(widths=(128, 128)).parameter_count == expected == 421_889


def test_parameter_count_mini_unet():
    c = 3

    def conv(cin, cout):
        return 9 * cin * cout + cout

    def stage(cin, cout):
        return conv(cin, cout) + 2 * cout + conv(cout, cout) + 2 * cout

    expected = stage(1, c) + stage(c, 2 * c) + stage(3 * c, c) + conv(c, 1)
    assert build_mini_unet(c).parameter_count == expected


def test_shape_contract():
    m = build_ssnet3l(widths=(8, 8))
    y = np.random.default_rng(3).random((64, 64))
    assert forward(m, y).shape == (64, 64)
    assert build_mini_unet(4)(np.zeros((3, 64, 64))).shape == (3, 64, 64)


def test_even_kernel_rejected():
    with pytest.raises(InvalidParameterError):
        build_ssnet3l(kernel_sizes=(9, 4, 3))


def test_mini_unet_odd_input():
    with pytest.raises(DimensionError):
        build_mini_unet(2)(np.zeros((9, 8)))


def test_zero_final_layer_gives_bias_field():
    m = build_ssnet3l(widths=(4, 4))
    head = m.children["body"].layers[-1]
    head.params["weight"][...] = 0
    head.params["bias"][...] = 0.37
    out = m(np.random.default_rng(4).random((16, 16)))
    assert np.all(out == 0.37)


def test_mini_unet_zero_weights_is_identity():
    m = build_mini_unet(2)
    for name, p in m.named_params():
        if name.endswith("weight"):
            p[...] = 0
    y = np.random.default_rng(5).random((8, 8))
    assert np.array_equal(m(y), y)


def test_eval_forward_bit_identical():
    m = build_mini_unet(2, seed=4)
    y = np.random.default_rng(6).random((2, 16, 16))
    assert np.array_equal(m(y), m(y))


def test_relu_outputs_nonnegative():
    m = build_ssnet3l(widths=(4, 4))
    x = np.random.default_rng(7).standard_normal((2, 1, 16, 16))
    for layer in m.children["body"].layers:
        x = layer.forward(x, train=True)
        if isinstance(layer, ReLU):
            assert (x >= 0).all()


def conv_oracle(x, w, b):
    # zero-padded "same" cross-correlation, one channel in and out
    k = w.shape[0]
    r = k // 2
    h, wd = x.shape
    xp = np.zeros((h + 2 * r, wd + 2 * r))
    xp[r:r + h, r:r + wd] = x
    out = np.empty_like(x)
    for i in range(h):
        for j in range(wd):
            out[i, j] = b + sum(w[u, v] * xp[i + u, j + v] for u in range(k) for v in range(k))
    return out


def test_tiny_net_matches_hand_computation():
    m = SSNet3L(widths=(1, 1), kernel_sizes=(3, 3, 3), seed=8, batchnorm=False)
    convs = [l for l in m.children["body"].layers if isinstance(l, Conv2d)]
    x = np.arange(16, dtype=float).reshape(4, 4) / 10 - 0.6
    z = x
    for n, c in enumerate(convs):
        z = conv_oracle(z, c.params["weight"][0, 0], c.params["bias"][0])
        if n < 2:
            z = np.maximum(z, 0)
    assert np.abs(m(x) - z).max() < 1e-12


def test_zero_residual_zero_gradient():
    m = build_ssnet3l(widths=(4, 4))
    y = np.random.default_rng(9).random((2, 8, 8))
    t = m(y)
    grads, loss = backward(m, y, t, mode="eval")
    assert loss == 0
    assert all(not g.any() for g in grads.values())


def test_doubling_residual_doubles_head_bias_grad():
    m = build_ssnet3l(widths=(4, 4))
    y = np.random.default_rng(10).random((2, 8, 8))
    out = m(y)
    g1, _ = backward(m, y, out - 0.1, mode="eval")
    g2, _ = backward(m, y, out - 0.2, mode="eval")
    name = [k for k in g1 if k.endswith("bias")][-1]
    assert np.allclose(g2[name], 2 * g1[name], rtol=1e-12)


def test_batchnorm_running_stats():
    bn = BatchNorm2d(2, momentum=0.9)
    x = np.random.default_rng(11).standard_normal((4, 2, 3, 3)) * 2 + 1
    bn.forward(x, train=True)
    mu = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    assert np.allclose(bn.buffers["running_mean"], 0.1 * mu)
    assert np.allclose(bn.buffers["running_var"], 0.9 + 0.1 * var)
    assert (bn.buffers["running_var"] >= 0).all()


def test_adam_first_step_is_lr():
    for g in (1e-3, 0.5, -7.0, 1e4):
        p = {"w": np.array([1.0])}
        adam_step(p, {"w": np.array([g])}, AdamState(), 1, lr=1e-3)
        assert abs(abs(p["w"][0] - 1.0) - 1e-3) < 1e-3 * 1e-4
        assert np.sign(1.0 - p["w"][0]) == np.sign(g)


def test_adam_zero_gradient():
    p = {"w": np.array([0.3, -2.0])}
    opt = Adam(p)
    for _ in range(3):
        opt.step({"w": np.zeros(2)})
    assert p["w"].tolist() == [0.3, -2.0]


def test_adam_rejects_step_zero():
    with pytest.raises(InvalidParameterError):
        adam_step({}, {}, AdamState(), 0)


def _tiny_data(n=6, size=12, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((n, size, size))
    y = 0.5 * (x + np.roll(x, 1, axis=-1))
    return y, x


def test_training_deterministic():
    y, x = _tiny_data()
    cfg = TrainConfig(epochs=3, batch_size=4, injection_sigma=0.01, seed=5)
    m1, m2 = build_ssnet3l((3, 3), seed=1), build_ssnet3l((3, 3), seed=1)
    h1 = train(m1, y, x, cfg)
    h2 = train(m2, y, x, cfg)
    assert h1 == h2
    for (_, a), (_, b) in zip(m1.state(), m2.state()):
        assert np.array_equal(a, b)


def test_history_length_and_finite():
    y, x = _tiny_data()
    h = train(build_ssnet3l((2, 2)), y, x, TrainConfig(epochs=4, batch_size=3))
    assert len(h) == 4 and np.all(np.isfinite(h))


def test_zero_injection_equals_plain_training():
    y, x = _tiny_data()
    base = TrainConfig(epochs=2, batch_size=2, seed=3)
    h0 = train(build_ssnet3l((2, 2)), y, x, base)
    h1 = train(build_ssnet3l((2, 2)), y, x, base, preprocess=lambda v: v)
    h2 = train(build_ssnet3l((2, 2)), y, x, TrainConfig(epochs=2, batch_size=2, seed=3, injection_sigma=0.05))
    assert h0 == h1 and h0 != h2


def test_overfit_single_pair():
    y, x = _tiny_data(n=1, size=8, seed=2)
    m = build_ssnet3l((4, 4), kernel_sizes=(3, 3, 3), seed=0)
    h = train(m, y, x, TrainConfig(epochs=500, batch_size=1, learning_rate=1e-2))
    assert h[-1] < 0.01 * h[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises():
    y, x = _tiny_data()
    with pytest.raises(TrainingDivergedError) as info:
        train(build_ssnet3l((2, 2)), y, x, TrainConfig(epochs=50, learning_rate=1e200))
    assert info.value.epoch >= 1


def test_train_config_validation():
    with pytest.raises(InvalidParameterError):
        TrainConfig(beta2=1.0)
    with pytest.raises(InvalidParameterError):
        TrainConfig(loss="l1")
    with pytest.raises(InvalidParameterError):
        train(build_ssnet3l((2, 2)), np.zeros((0, 8, 8)), np.zeros((0, 8, 8)), TrainConfig())


@pytest.mark.parametrize("factory", [lambda: build_ssnet3l((3, 2), seed=4, skip=True, padding="periodic"),
                                     lambda: build_mini_unet(2, seed=5)])
def test_checkpoint_round_trip(tmp_path, factory):
    m = factory()
    y, x = _tiny_data(size=8)
    train(m, y, x, TrainConfig(epochs=1, batch_size=3))
    save_checkpoint(m, tmp_path / "a.ckpt")
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert type(back) is type(m)
    assert np.array_equal(back(y), m(y))
    save_checkpoint(back, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.ckpt").read_bytes()[:8] == b"SDBCKPT1"


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.ckpt").write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.ckpt")
    m = build_ssnet3l((2, 2))
    save_checkpoint(m, tmp_path / "ok.ckpt")
    (tmp_path / "long.ckpt").write_bytes((tmp_path / "ok.ckpt").read_bytes() + b"\0" * 8)
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "long.ckpt")


def test_loss_history_csv(tmp_path):
    h = [0.5, 0.25, 1 / 3]
    write_loss_history(tmp_path / "l.csv", h)
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "epoch,mean_loss"
    assert read_loss_history(tmp_path / "l.csv") == h
