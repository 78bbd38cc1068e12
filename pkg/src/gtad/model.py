"""End-to-end model: connection policy + temporal encoder + forecaster."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import checkpoint as ckpt
from .encoder import EncoderConfig, EncoderWeights, encode_tokens, make_encoder
from .errors import DataError, ShapeError
from .policy import AdjacencySample, ConnectionPolicy, init_complete_graph
from .tensor import Tensor
from .transformer import ForecasterParams, StackConfig, forecast, make_forecaster


@dataclass
class ModelConfig:
    num_sensors: int
    window: int = 60
    label_len: int = 30
    levels: int = 3
    kernel: int = 2
    d_model: int = 128
    heads: int = 8
    m_global: int = 128
    enc_layers: int = 3
    dec_layers: int = 2
    ffn: int = 128
    dropout: float = 0.05
    p_init: float = 0.9

    def validate(self) -> None:
        enc = EncoderConfig(self.levels, self.kernel, self.d_model)
        t_out = enc.output_length(self.window)
        if self.m_global < max(t_out, self.label_len + 1):
            raise ShapeError(f"m_global={self.m_global} smaller than longest sequence "
                             f"{max(t_out, self.label_len + 1)}")
        if self.label_len >= self.window:
            raise ShapeError("label length must be shorter than the window")


class Model:
    """Owns all trainable state; forward maps (windows, labels, graph) to forecasts."""

    def __init__(self, cfg: ModelConfig, gen: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.policy: ConnectionPolicy = init_complete_graph(cfg.num_sensors, cfg.p_init)
        self.encoder: EncoderWeights = make_encoder(
            cfg.num_sensors, EncoderConfig(cfg.levels, cfg.kernel, cfg.d_model), gen)
        self.forecaster: ForecasterParams = make_forecaster(
            cfg.d_model, cfg.num_sensors, cfg.label_len, cfg.heads, cfg.m_global,
            StackConfig(cfg.enc_layers, cfg.dec_layers, cfg.ffn, cfg.dropout), gen)

    def network_params(self) -> list[Tensor]:
        """All weights except the connection logits."""
        return self.encoder.params() + self.forecaster.params()

    def named_params(self) -> dict[str, Tensor]:
        named = {"policy/logits": self.policy.logits}
        for i, p in enumerate(self.encoder.params()):
            named[f"enc/{i:03d}"] = p
        for i, p in enumerate(self.forecaster.params()):
            named[f"fore/{i:03d}"] = p
        return named

    def forward(self, windows: Tensor, decoder_in: Tensor,
                adj: AdjacencySample | Tensor,
                drop_p: float = 0.0, gen=None) -> Tensor:
        tokens = encode_tokens(windows, self.encoder, adj)
        return forecast(tokens, decoder_in, self.forecaster, drop_p=drop_p, gen=gen)

    def save(self, path, extra: dict[str, np.ndarray] | None = None) -> None:
        tensors: dict[str, np.ndarray] = {}
        for key, val in asdict(self.cfg).items():
            tensors[f"hp/{key}"] = np.asarray(float(val))
        for name, p in self.named_params().items():
            tensors[name] = p.data
        for name, arr in (extra or {}).items():
            tensors[name] = np.asarray(arr, dtype=np.float64)
        ckpt.save(path, tensors)

    @classmethod
    def load(cls, path) -> tuple["Model", dict[str, np.ndarray]]:
        """Rebuild the exact architecture from the checkpoint header.

        Returns the model and any extra (non-parameter) tensors stored with it.
        """
        tensors = ckpt.load(path)
        hp = {k[3:]: v for k, v in tensors.items() if k.startswith("hp/")}
        if "num_sensors" not in hp:
            raise DataError(f"{path}: checkpoint lacks hyperparameter header")
        ints = {"num_sensors", "window", "label_len", "levels", "kernel", "d_model",
                "heads", "m_global", "enc_layers", "dec_layers", "ffn"}
        kwargs = {k: (int(v) if k in ints else float(v)) for k, v in hp.items()}
        cfg = ModelConfig(**kwargs)
        model = cls(cfg, np.random.default_rng(0))
        extra: dict[str, np.ndarray] = {}
        named = model.named_params()
        for name, arr in tensors.items():
            if name.startswith("hp/"):
                continue
            if name in named:
                if named[name].data.shape != arr.shape:
                    raise DataError(f"{path}: tensor {name} has shape {arr.shape}, "
                                    f"architecture expects {named[name].data.shape}")
                named[name].data[...] = arr
            else:
                extra[name] = arr
        missing = set(named) - set(tensors)
        if missing:
            raise DataError(f"{path}: checkpoint missing tensors {sorted(missing)[:3]}...")
        return model, extra
