"""Run configuration: flat key-value files with command-line overrides.

Config files hold one `key = value` per line ('#' starts a comment).
Every RunConfig field is a key; command-line flags win over file values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .data import Anomaly, SyntheticSpec, default_synthetic_spec
from .errors import UsageError


@dataclass
class RunConfig:
    # paths
    train_csv: str = "train.csv"
    test_csv: str = "test.csv"
    checkpoint: str = "model.ckpt"
    out_dir: str = "."
    scores_csv: str = "scores.csv"
    graph_true: str = ""
    # preprocessing
    downsample: int = 1
    window: int = 60
    label_len: int = 30
    # model
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
    # training
    lr: float = 1e-4
    policy_lr: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.99
    epochs: int = 50
    patience: int = 10
    warmup_epochs: int = 5
    lambda_s: float = 0.01
    batch: int = 32
    train_stride: int = 1
    val_frac: float = 0.1
    tau_start: float = 1.0
    tau_decay: float = 0.9
    tau_floor: float = 0.1
    graph_mode: str = "learned"  # learned | complete (static full graph)
    edge_threshold: float = 0.5
    detect_threshold: float = float("inf")
    seed: int = 0
    # synthetic benchmark (documented keys)
    nodes: int = 10
    train_length: int = 5000
    test_length: int = 2000
    noise: float = 0.1
    edges: str = ""  # "src>dst,src>dst,..." empty selects the default planted graph
    lags: str = ""  # comma ints, aligned with edges
    couplings: str = ""  # comma floats, aligned with edges
    anomalies: str = ""  # "kind:node:start:duration:magnitude,..."

    def validate(self) -> None:
        if self.graph_mode not in ("learned", "complete"):
            raise UsageError(f"graph_mode must be learned|complete, got {self.graph_mode!r}")
        for name in ("window", "label_len", "epochs", "batch", "levels", "d_model",
                     "heads", "downsample", "train_stride"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def parse_config_file(path: str | Path) -> dict[str, object]:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    out: dict[str, object] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def build_config(file_path: str | None, overrides: dict[str, object]) -> RunConfig:
    """Merge defaults <- config file <- CLI overrides (flags win)."""
    values: dict[str, object] = {}
    if file_path:
        values.update(parse_config_file(file_path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def synthetic_spec_from(cfg: RunConfig) -> SyntheticSpec:
    """Materialize the synthetic benchmark described by a RunConfig."""
    if not cfg.edges:
        spec = default_synthetic_spec(cfg.nodes, cfg.train_length, cfg.test_length,
                                      cfg.noise)
        if cfg.anomalies:
            spec.anomalies = _parse_anomalies(cfg.anomalies)
        return spec
    edges = []
    for part in cfg.edges.split(","):
        try:
            src, dst = part.strip().split(">")
            edges.append((int(src), int(dst)))
        except ValueError:
            raise UsageError(f"bad edge {part!r}; expected 'src>dst'") from None
    lags = [int(x) for x in cfg.lags.split(",")] if cfg.lags else [1] * len(edges)
    couplings = ([float(x) for x in cfg.couplings.split(",")] if cfg.couplings
                 else [0.8] * len(edges))
    return SyntheticSpec(cfg.nodes, cfg.train_length, cfg.test_length,
                         edges, lags, couplings, cfg.noise,
                         _parse_anomalies(cfg.anomalies) if cfg.anomalies else [])


def _parse_anomalies(text: str) -> list[Anomaly]:
    out = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) not in (4, 5):
            raise UsageError(f"bad anomaly {part!r}; expected kind:node:start:duration[:magnitude]")
        mag = float(bits[4]) if len(bits) == 5 else 3.0
        out.append(Anomaly(bits[0], int(bits[1]), int(bits[2]), int(bits[3]), mag))
    return out
