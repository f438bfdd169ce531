import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from densehar import unet
from densehar.data import LabeledSeries, SubSequence, extract_subsequences, synth_generate, three_class_spec
from densehar.errors import ConfigError, DimensionError, FormatError, GeometryError, InputError, LabelError
from densehar.network import load_model
from densehar.tensor import numerical_gradient, softmax, softmax_cross_entropy
from densehar.training import TrainConfig, predict_dense, tile_series
from densehar.unet import UNetConfig, build, expected_conv_layers, fit


def small_config(**kw):
    base = dict(in_channels=3, num_classes=3, base_features=4, levels=3, subseq_length=16, seed=0)
    base.update(kw)
    return UNetConfig(**base)


def random_subsequences(n, cfg, seed=0):
    rng = np.random.default_rng(seed)
    return [
        SubSequence(rng.standard_normal((cfg.in_channels, cfg.subseq_length)),
                    rng.integers(0, cfg.num_classes, cfg.subseq_length), i * cfg.subseq_length)
        for i in range(n)
    ]


@pytest.fixture(scope="module")
def default_model():
    return build(UNetConfig(in_channels=3, num_classes=6))


class TestBuild:
    def test_default_has_28_convolutions(self, default_model):
        assert default_model.conv_layer_count() == 28 == expected_conv_layers(6)

    def test_default_widths(self, default_model):
        assert default_model.config.widths() == [32, 64, 128, 256, 512, 1024]
        assert default_model.modules["down0"].layers[0].weight.shape == (32, 3, 3)
        assert default_model.modules["merge0"].layers[0].weight.shape == (32, 64, 3)
        assert default_model.modules["up4"].weight.shape == (1024, 512, 2)

    def test_minimal_geometry(self):
        m = build(UNetConfig(in_channels=1, num_classes=2, base_features=1, levels=2, subseq_length=4))
        assert m.forward(np.ones((1, 1, 4))).shape == (1, 2, 4)
        assert m.pools[0].forward(np.ones((1, 1, 4))).shape == (1, 1, 2)

    def test_same_seed_same_parameters(self):
        a, b = build(small_config(seed=5)), build(small_config(seed=5))
        for (na, pa), (nb, pb) in zip(a.parameters().items(), b.parameters().items()):
            assert na == nb
            assert pa.value.tobytes() == pb.value.tobytes()

    def test_he_init_and_zero_bias(self):
        m = build(small_config(base_features=64, levels=2))
        w = m.modules["down1"].layers[2].weight.value  # 128 x 128 x 3
        assert w.std() == pytest.approx(np.sqrt(2 / (128 * 3)), rel=0.02)
        assert not any(p.value.any() for n, p in m.parameters().items() if n.endswith("bias"))

    def test_indivisible_length(self):
        with pytest.raises(ConfigError):
            UNetConfig(subseq_length=100, levels=6)


class TestForward:
    def test_default_shape(self, default_model):
        out = default_model.forward(np.random.default_rng(0).standard_normal((1, 3, 224)))
        assert out.shape == (1, 6, 224)

    def test_zero_head_gives_uniform(self):
        m = build(small_config())
        m.head.weight.value[:] = 0.0
        p = softmax(m.forward(np.random.default_rng(1).standard_normal((2, 3, 16))))
        np.testing.assert_allclose(p, 1 / 3, atol=1e-15)

    def test_identical_rows(self):
        m = build(small_config())
        x = np.random.default_rng(2).standard_normal((1, 3, 16))
        out = m.forward(np.concatenate([x, x]))
        assert out[0].tobytes() == out[1].tobytes()

    def test_wrong_length(self):
        with pytest.raises(GeometryError):
            build(small_config()).forward(np.zeros((1, 3, 12)))

    @settings(max_examples=15, deadline=None)
    @given(levels=st.integers(1, 4), f=st.integers(1, 4), mult=st.integers(1, 3),
           c=st.integers(1, 3), k=st.integers(1, 4), b=st.integers(1, 2))
    def test_length_preserved(self, levels, f, mult, c, k, b):
        n = mult * 2 ** (levels - 1)
        m = build(UNetConfig(c, k, f, levels, n))
        assert m.forward(np.ones((b, c, n))).shape == (b, k, n)
        assert m.conv_layer_count() == expected_conv_layers(levels)

    def test_skip_ablation_changes_output(self):
        m = build(small_config())
        x = np.random.default_rng(3).standard_normal((1, 3, 16))
        with_skips = m.forward(x)
        m.zero_skips = True
        without = m.forward(x)
        assert not np.allclose(with_skips, without)

    def test_full_network_gradients(self):
        m = build(UNetConfig(in_channels=2, num_classes=3, base_features=2, levels=3, subseq_length=8, seed=3))
        rng = np.random.default_rng(0)
        for p in m.parameters().values():
            p.value += 0.05 * rng.standard_normal(p.shape)  # move biases off the ReLU kink
        x, y = rng.standard_normal((2, 2, 8)), rng.integers(0, 3, (2, 8))
        _, g = softmax_cross_entropy(m.forward(x), y)
        m.backward(g)

        def loss():
            return softmax_cross_entropy(m.forward(x), y)[0]

        for name, p in m.parameters().items():
            analytic = p.grad.copy()
            numeric = numerical_gradient(loss, p.value)
            err = np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-8)
            assert err < 1e-4, name


class TestFit:
    def test_one_subsequence_one_step(self):
        cfg = small_config()
        log = fit(build(cfg), random_subsequences(1, cfg), TrainConfig(epochs=1))
        assert log.steps == 1

    def test_step_count(self):
        cfg = small_config()
        log = fit(build(cfg), random_subsequences(5, cfg), TrainConfig(epochs=3, batch_size=2))
        assert log.steps == 3 * 3
        assert len(log.losses) == 3

    def test_zero_lr_freezes(self):
        cfg = small_config()
        m = build(cfg)
        before = {n: p.value.copy() for n, p in m.parameters().items()}
        log = fit(m, random_subsequences(3, cfg), TrainConfig(learning_rate=0.0, epochs=3))
        for n, p in m.parameters().items():
            np.testing.assert_array_equal(p.value, before[n])
        assert log.losses[0] == pytest.approx(log.losses[1], abs=1e-12) == pytest.approx(log.losses[2], abs=1e-12)

    def test_empty(self):
        with pytest.raises(InputError):
            fit(build(small_config()), [], TrainConfig(epochs=1))

    def test_label_out_of_range(self):
        cfg = small_config()
        subs = random_subsequences(2, cfg)
        subs[1].dense_labels[4] = 3
        with pytest.raises(LabelError):
            fit(build(cfg), subs, TrainConfig(epochs=1))

    def test_wrong_subsequence_length(self):
        cfg = small_config()
        subs = random_subsequences(2, small_config(subseq_length=8))
        with pytest.raises(GeometryError):
            fit(build(cfg), subs, TrainConfig(epochs=1))

    def test_deterministic(self):
        cfg = small_config()
        subs = random_subsequences(4, cfg)
        a, b = build(cfg), build(cfg)
        la = fit(a, subs, TrainConfig(epochs=2, batch_size=2, seed=7))
        lb = fit(b, subs, TrainConfig(epochs=2, batch_size=2, seed=7))
        assert la.losses == lb.losses
        for pa, pb in zip(a.parameters().values(), b.parameters().values()):
            assert pa.value.tobytes() == pb.value.tobytes()

    def test_overfits_single_subsequence(self):
        cfg = UNetConfig(in_channels=3, num_classes=4, base_features=16, levels=3, subseq_length=32, seed=1)
        sub = random_subsequences(1, cfg, seed=4)
        log = fit(build(cfg), sub, TrainConfig(epochs=500, batch_size=1))
        below = [i for i, v in enumerate(log.losses) if v < 0.01]
        assert below, f"final loss {log.losses[-1]}"


class TestPredictDense:
    @pytest.fixture(scope="class")
    @classmethod
    def trained(cls):
        cfg = UNetConfig(in_channels=3, num_classes=3, base_features=4, levels=3, subseq_length=32, seed=0)
        series = synth_generate(three_class_spec(32 * 20, seed=2))
        m = build(cfg)
        fit(m, extract_subsequences(series, 32), TrainConfig(epochs=2, batch_size=8))
        return m, series

    def test_length_exact_tiles(self, trained):
        m, series = trained
        s = LabeledSeries(series.channels[:, :64], series.labels[:64], 20.0, series.class_names)
        assert tile_series(s.channels, 32).shape == (2, 3, 32)
        assert predict_dense(m, s).shape == (64,)

    def test_partial_tail(self, trained):
        m, series = trained
        x = series.channels[:, :33]
        tiles = tile_series(x, 32)
        assert tiles.shape == (2, 3, 32)
        np.testing.assert_array_equal(tiles[1], np.repeat(x[:, 32:33], 32, axis=1))
        assert predict_dense(m, x).shape == (33,)

    def test_tiles_do_not_leak(self, trained):
        m, series = trained
        x = series.channels[:, :100]
        dense = predict_dense(m, x)
        for i in range(3):
            tile = m.normalize(x[None, :, 32 * i : 32 * (i + 1)])
            np.testing.assert_array_equal(dense[32 * i : 32 * (i + 1)], m.forward(tile).argmax(axis=1)[0])

    def test_empty_series(self, trained):
        with pytest.raises(InputError):
            predict_dense(trained[0], np.zeros((3, 0)))

    def test_channel_mismatch(self, trained):
        with pytest.raises(DimensionError):
            predict_dense(trained[0], np.zeros((2, 40)))


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path):
        cfg = small_config()
        m = build(cfg)
        fit(m, random_subsequences(3, cfg), TrainConfig(epochs=1))
        path = tmp_path / "m.dhm"
        unet.save(m, path)
        back = unet.load(path)
        assert back.config == m.config
        for (n, a), b in zip(m.parameters().items(), back.parameters().values()):
            assert a.value.tobytes() == b.value.tobytes(), n
        x = np.random.default_rng(0).standard_normal((2, 3, 16))
        assert back.forward(x).tobytes() == m.forward(x).tobytes()
        np.testing.assert_array_equal(back.stats.mean, m.stats.mean)
        assert isinstance(load_model(path), unet.UNetModel)

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.dhm"
        unet.save(build(small_config()), path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(FormatError):
            unet.load(path)

    def test_bit_flip(self, tmp_path):
        path = tmp_path / "m.dhm"
        unet.save(build(small_config()), path)
        buf = bytearray(path.read_bytes())
        buf[200] ^= 1
        path.write_bytes(bytes(buf))
        with pytest.raises(FormatError):
            unet.load(path)

    def test_not_a_model(self, tmp_path):
        path = tmp_path / "x.dhm"
        path.write_bytes(b"hello world" * 10)
        with pytest.raises(FormatError):
            load_model(path)

    def test_loaded_model_rejects_other_channel_count(self, tmp_path):
        path = tmp_path / "m.dhm"
        unet.save(build(small_config()), path)
        with pytest.raises(DimensionError):
            predict_dense(unet.load(path), np.zeros((6, 20)))
