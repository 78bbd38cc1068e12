import numpy as np
import pytest

from gtad.encoder import (
    EncoderConfig,
    EncoderWeights,
    encode_window,
    fuse_tokens,
    make_encoder,
    positional_encode,
    sinusoid_table,
)
from gtad.errors import ShapeError
from gtad.graphconv import MessageMLP, ip_conv
from gtad.rng import make_generator
from gtad.tensor import Tensor, conv1d_dilated, no_grad

from helpers import check_grads


def passthrough_encoder(m, levels=1):
    """Delta conv filters and 1-channel levels so conv output equals input."""
    cfg = EncoderConfig(levels=levels, kernel=2, d_model=1)
    enc = EncoderWeights(m, cfg)
    gen = make_generator(0)
    for _ in range(levels):
        enc.conv_w.append(Tensor(np.array([[[1.0, 0.0]]]), requires_grad=True))
        enc.conv_b.append(Tensor(np.zeros(1), requires_grad=True))
        from gtad.graphconv import make_message_mlp

        enc.mlps.append(make_message_mlp(1, gen))
    enc.node_proj = Tensor(np.eye(1), requires_grad=True)
    enc.node_proj_b = Tensor(np.zeros(1), requires_grad=True)
    enc.fuse_w = Tensor(np.ones((m, 1)), requires_grad=True)
    enc.fuse_b = Tensor(np.zeros(1), requires_grad=True)
    return enc


class TestEncodeWindow:
    def test_identity_configuration(self):
        m, n = 3, 8
        enc = passthrough_encoder(m)
        gen = make_generator(1)
        window = gen.normal(size=(m, n))
        out = encode_window(Tensor(window), enc, Tensor(np.zeros((m, m))))
        assert out.shape == (m, n - 1, 1)
        np.testing.assert_allclose(out.data[:, :, 0], window[:, : n - 1], atol=1e-12)

    def test_output_length_arithmetic(self):
        cfg = EncoderConfig(levels=3, kernel=2, d_model=8)
        assert cfg.output_length(60) == 53
        gen = make_generator(2)
        enc = make_encoder(4, cfg, gen)
        out = encode_window(Tensor(gen.normal(size=(4, 60))), enc,
                            Tensor(np.zeros((4, 4))))
        assert out.shape == (4, 53, 8)

    @pytest.mark.parametrize("levels,n", [(1, 2), (2, 5), (2, 17), (3, 8), (4, 16), (3, 60)])
    def test_length_formula_holds(self, levels, n):
        cfg = EncoderConfig(levels=levels, kernel=2, d_model=4)
        gen = make_generator(3)
        enc = make_encoder(2, cfg, gen)
        out = encode_window(Tensor(gen.normal(size=(2, n))), enc, Tensor(np.zeros((2, 2))))
        assert out.shape[1] == n - sum(2**k for k in range(levels))

    def test_window_shorter_than_receptive_field(self):
        cfg = EncoderConfig(levels=3, kernel=2, d_model=4)
        enc = make_encoder(2, cfg, make_generator(4))
        with pytest.raises(ShapeError):
            encode_window(Tensor(np.zeros((2, 7))), enc, Tensor(np.zeros((2, 2))))

    def test_composition_oracle_two_levels(self):
        # 2-node chain: encode_window must equal hand-composed
        # conv -> graphconv -> conv -> graphconv -> projection
        m, n = 2, 12
        cfg = EncoderConfig(levels=2, kernel=2, d_model=4)
        gen = make_generator(5)
        enc = make_encoder(m, cfg, gen)
        adj = np.zeros((m, m))
        adj[0, 1] = 1.0  # chain 0 -> 1
        window = Tensor(gen.normal(size=(m, n)))

        out = encode_window(window, enc, Tensor(adj))

        with no_grad():
            h = Tensor(window.data.reshape(m, 1, n))
            for lvl, dil in enumerate((1, 2)):
                h = conv1d_dilated(h, enc.conv_w[lvl], dilation=dil)
                h = h + enc.conv_b[lvl].reshape(enc.conv_b[lvl].shape[0], 1)
                tm = h.transpose((2, 0, 1))
                tm = tm + ip_conv(tm, Tensor(adj), enc.mlps[lvl])
                h = tm.transpose((1, 2, 0))
            emb = h.transpose((0, 2, 1)) @ enc.node_proj + enc.node_proj_b
        np.testing.assert_allclose(out.data, emb.data, atol=1e-10)

    def test_empty_graph_has_no_cross_node_flow(self):
        m, n = 3, 10
        cfg = EncoderConfig(levels=2, kernel=2, d_model=4)
        gen = make_generator(6)
        enc = make_encoder(m, cfg, gen)
        window = gen.normal(size=(m, n))
        with no_grad():
            base = encode_window(Tensor(window), enc, Tensor(np.zeros((m, m)))).data
            bumped = window.copy()
            bumped[2] += 5.0
            moved = encode_window(Tensor(bumped), enc, Tensor(np.zeros((m, m)))).data
        np.testing.assert_allclose(moved[:2], base[:2], atol=1e-12)
        assert np.abs(moved[2] - base[2]).max() > 1e-6

    def test_gradient_through_pipeline(self):
        m, n = 2, 9
        cfg = EncoderConfig(levels=2, kernel=2, d_model=3)
        gen = make_generator(7)
        enc = make_encoder(m, cfg, gen)
        window = Tensor(gen.normal(size=(m, n)), requires_grad=True)
        adj = Tensor(gen.random((m, m)) * (1 - np.eye(m)), requires_grad=True)
        params = {"window": window, "adj": adj}
        for i, p in enumerate(enc.params()):
            params[f"p{i}"] = p

        def loss():
            emb = encode_window(window, enc, adj)
            return (fuse_tokens(emb, enc) ** 2).sum()

        check_grads(loss, params)


class TestPositionalEncode:
    def test_zero_at_origin_even_channel(self):
        x = Tensor(np.zeros((4, 6)))
        out = positional_encode(x)
        assert out.data[0, 0] == 0.0  # sin(0)
        assert out.data[0, 1] == 1.0  # cos(0)

    def test_positions_become_distinguishable(self):
        x = Tensor(np.ones((5, 8)))
        out = positional_encode(x).data
        for t in range(1, 5):
            assert np.abs(out[t] - out[0]).max() > 1e-6

    def test_table_range(self):
        table = sinusoid_table(100, 16)
        assert table.min() >= -1.0 and table.max() <= 1.0

    def test_broadcasts_over_nodes(self):
        x = Tensor(np.zeros((3, 4, 6)))
        out = positional_encode(x)
        np.testing.assert_allclose(out.data[0], out.data[2], atol=1e-15)
