"""Encoder-decoder forecasting stack built on branch-mixed attention.

Pre-layer-norm residual blocks throughout. The decoder consumes the
last label_len observed sensor vectors plus one zero-padded slot, embeds
them linearly, applies causally masked self-attention and cross-attention
to the encoder memory, and a linear head reads the next-step forecast
for all sensors off the padded slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import (
    AttentionParams,
    BranchParams,
    branch_mix,
    causal_mask,
    make_attention_params,
    make_branch_params,
    multi_head,
)
from .encoder import positional_encode
from .errors import ShapeError
from .tensor import Tensor, dropout, layer_norm, matmul, relu


@dataclass
class StackConfig:
    enc_layers: int = 3
    dec_layers: int = 2
    ffn: int = 128
    dropout: float = 0.05


@dataclass
class LayerNormParams:
    gain: Tensor
    bias: Tensor

    def params(self) -> list[Tensor]:
        return [self.gain, self.bias]


@dataclass
class FeedForwardParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def params(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class EncoderLayerParams:
    ln1: LayerNormParams
    branch: BranchParams
    ln2: LayerNormParams
    ffn: FeedForwardParams

    def params(self) -> list[Tensor]:
        return self.ln1.params() + self.branch.params() + self.ln2.params() + self.ffn.params()


@dataclass
class DecoderLayerParams:
    ln1: LayerNormParams
    self_branch: BranchParams
    ln2: LayerNormParams
    cross: AttentionParams
    ln3: LayerNormParams
    ffn: FeedForwardParams

    def params(self) -> list[Tensor]:
        return (self.ln1.params() + self.self_branch.params() + self.ln2.params()
                + self.cross.params() + self.ln3.params() + self.ffn.params())


@dataclass
class ForecasterParams:
    d: int
    num_sensors: int
    label_len: int
    cfg: StackConfig
    embed_w: Tensor
    embed_b: Tensor
    enc_layers: list[EncoderLayerParams] = field(default_factory=list)
    enc_ln: LayerNormParams | None = None
    dec_layers: list[DecoderLayerParams] = field(default_factory=list)
    dec_ln: LayerNormParams | None = None
    head_w: Tensor | None = None
    head_b: Tensor | None = None

    def params(self) -> list[Tensor]:
        out = [self.embed_w, self.embed_b]
        for layer in self.enc_layers:
            out += layer.params()
        out += self.enc_ln.params()
        for layer in self.dec_layers:
            out += layer.params()
        out += self.dec_ln.params()
        out += [self.head_w, self.head_b]
        return out


def _make_ln(d: int) -> LayerNormParams:
    return LayerNormParams(Tensor(np.ones(d), requires_grad=True),
                           Tensor(np.zeros(d), requires_grad=True))


def _make_ffn(d: int, width: int, gen: np.random.Generator) -> FeedForwardParams:
    s1, s2 = np.sqrt(1.0 / d), np.sqrt(1.0 / width)
    return FeedForwardParams(
        w1=Tensor(gen.uniform(-s1, s1, (d, width)), requires_grad=True),
        b1=Tensor(np.zeros(width), requires_grad=True),
        w2=Tensor(gen.uniform(-s2, s2, (width, d)), requires_grad=True),
        b2=Tensor(np.zeros(d), requires_grad=True),
    )


def make_forecaster(d: int, num_sensors: int, label_len: int, heads: int, m_global: int,
                    cfg: StackConfig, gen: np.random.Generator) -> ForecasterParams:
    s = np.sqrt(1.0 / num_sensors)
    fp = ForecasterParams(
        d=d, num_sensors=num_sensors, label_len=label_len, cfg=cfg,
        embed_w=Tensor(gen.uniform(-s, s, (num_sensors, d)), requires_grad=True),
        embed_b=Tensor(np.zeros(d), requires_grad=True),
    )
    for _ in range(cfg.enc_layers):
        fp.enc_layers.append(EncoderLayerParams(
            ln1=_make_ln(d),
            branch=make_branch_params(d, heads, m_global, gen),
            ln2=_make_ln(d),
            ffn=_make_ffn(d, cfg.ffn, gen),
        ))
    fp.enc_ln = _make_ln(d)
    for _ in range(cfg.dec_layers):
        fp.dec_layers.append(DecoderLayerParams(
            ln1=_make_ln(d),
            self_branch=make_branch_params(d, heads, m_global, gen),
            ln2=_make_ln(d),
            cross=make_attention_params(d, heads, gen),
            ln3=_make_ln(d),
            ffn=_make_ffn(d, cfg.ffn, gen),
        ))
    fp.dec_ln = _make_ln(d)
    sh = np.sqrt(1.0 / d)
    fp.head_w = Tensor(gen.uniform(-sh, sh, (d, num_sensors)), requires_grad=True)
    fp.head_b = Tensor(np.zeros(num_sensors), requires_grad=True)
    return fp


def _ffn_apply(x: Tensor, p: FeedForwardParams) -> Tensor:
    return matmul(relu(matmul(x, p.w1) + p.b1), p.w2) + p.b2


def _maybe_drop(x: Tensor, p: float, gen) -> Tensor:
    if p > 0.0 and gen is not None:
        return dropout(x, p, gen)
    return x


def encoder_layer(x: Tensor, p: EncoderLayerParams, drop_p: float = 0.0, gen=None) -> Tensor:
    attn_drop = (drop_p, gen) if drop_p > 0.0 and gen is not None else None
    h = branch_mix(layer_norm(x, p.ln1.gain, p.ln1.bias), p.branch, drop=attn_drop)
    x = x + h
    h = _ffn_apply(layer_norm(x, p.ln2.gain, p.ln2.bias), p.ffn)
    return x + _maybe_drop(h, drop_p, gen)


def decoder_layer(x: Tensor, memory: Tensor, p: DecoderLayerParams,
                  drop_p: float = 0.0, gen=None) -> Tensor:
    attn_drop = (drop_p, gen) if drop_p > 0.0 and gen is not None else None
    mask = causal_mask(x.shape[-2])
    h = branch_mix(layer_norm(x, p.ln1.gain, p.ln1.bias), p.self_branch,
                   mask=mask, causal=True, drop=attn_drop)
    x = x + h
    h = multi_head(layer_norm(x, p.ln2.gain, p.ln2.bias), p.cross,
                   memory=memory, drop=attn_drop)
    x = x + h
    h = _ffn_apply(layer_norm(x, p.ln3.gain, p.ln3.bias), p.ffn)
    return x + _maybe_drop(h, drop_p, gen)


def forecast(tokens: Tensor, decoder_in: Tensor, fp: ForecasterParams,
             drop_p: float = 0.0, gen=None) -> Tensor:
    """Predict the next-step sensor vector.

    tokens: [..., T', d] encoded context; decoder_in: [..., label_len + 1, M]
    raw label series whose final slot is zero-padded. Returns [..., M].
    """
    if decoder_in.shape[-2] != fp.label_len + 1:
        raise ShapeError(f"decoder input length {decoder_in.shape[-2]} != "
                         f"label_len + 1 = {fp.label_len + 1}")
    if decoder_in.shape[-1] != fp.num_sensors:
        raise ShapeError(f"decoder input has {decoder_in.shape[-1]} sensors, "
                         f"expected {fp.num_sensors}")
    x = positional_encode(tokens)
    for layer in fp.enc_layers:
        x = encoder_layer(x, layer, drop_p, gen)
    memory = layer_norm(x, fp.enc_ln.gain, fp.enc_ln.bias)

    y = positional_encode(matmul(decoder_in, fp.embed_w) + fp.embed_b)
    for layer in fp.dec_layers:
        y = decoder_layer(y, memory, layer, drop_p, gen)
    y = layer_norm(y, fp.dec_ln.gain, fp.dec_ln.bias)
    last = y[..., fp.label_len, :]
    return matmul(last.reshape(last.shape[:-1] + (1, fp.d)), fp.head_w).reshape(
        last.shape[:-1] + (fp.num_sensors,)) + fp.head_b
