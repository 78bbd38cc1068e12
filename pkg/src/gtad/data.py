"""Dataset ingestion, preprocessing, and the planted-graph synthetic benchmark.

The synthetic generator drives each root node with a seasonal signal plus
AR(1) noise and propagates every edge as a lagged, scaled copy of the
source into the target. Test-split anomalies are injected into the
recursion itself, so they flow downstream through the planted edges with
the same lags; labels mark the union of injected and propagated spans.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detector import MetricsReport, compute_metrics
from .errors import DataError, ShapeError
from .policy import AdjacencySample

ANOMALY_KINDS = ("spike", "stuck", "drift")


@dataclass
class RawSeries:
    names: list[str]
    values: np.ndarray  # [M, L]
    labels: np.ndarray | None = None  # [L] binary, test sets only

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("series values must be a 2-D sensor x time array")
        if len(self.names) != self.values.shape[0]:
            raise DataError(f"{len(self.names)} names for {self.values.shape[0]} sensors")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.values.shape[1],):
                raise DataError("label length does not match series length")
            if not np.isin(self.labels, (0, 1)).all():
                raise DataError("labels must be binary")

    @property
    def num_sensors(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass
class NormalizerStats:
    vmin: np.ndarray  # per-sensor training minimum
    vmax: np.ndarray

    @classmethod
    def from_training(cls, series: RawSeries) -> "NormalizerStats":
        return cls(series.values.min(axis=1), series.values.max(axis=1))


def normalize(series: RawSeries, stats: NormalizerStats) -> RawSeries:
    """Per-sensor affine map to the training [0, 1] range; no clipping.

    Constant training sensors map to zero via a denominator guard.
    """
    span = np.maximum(stats.vmax - stats.vmin, 1e-12)
    values = (series.values - stats.vmin[:, None]) / span[:, None]
    return RawSeries(series.names, values, series.labels)


def denormalize(values: np.ndarray, stats: NormalizerStats) -> np.ndarray:
    span = np.maximum(stats.vmax - stats.vmin, 1e-12)
    return values * span[:, None] + stats.vmin[:, None]


def median_downsample(series: RawSeries, factor: int) -> RawSeries:
    """Per-sensor block medians; labels take the block max (any anomaly counts)."""
    if factor < 1:
        raise DataError("downsample factor must be >= 1")
    if factor == 1:
        return series
    length = series.length
    edges = list(range(0, length, factor))
    values = np.stack([
        np.median(series.values[:, lo:min(lo + factor, length)], axis=1) for lo in edges
    ], axis=1)
    labels = None
    if series.labels is not None:
        labels = np.array([
            series.labels[lo:min(lo + factor, length)].max() for lo in edges
        ])
    return RawSeries(series.names, values, labels)


@dataclass
class WindowConfig:
    window: int = 60
    label_len: int = 30
    stride: int = 1

    def __post_init__(self):
        if self.label_len >= self.window:
            raise DataError("label length must be shorter than the window")
        if self.stride < 1:
            raise DataError("stride must be >= 1")


def make_windows(series: RawSeries, cfg: WindowConfig
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Slide over the series producing (windows, decoder inputs, targets, target times).

    windows: [N, M, n]; decoder inputs: [N, label_len + 1, M] with the final
    slot zeroed; targets: [N, M] (the vector right after each window);
    target times: [N] absolute indices. N = L - n for stride 1.
    """
    n = cfg.window
    if series.length <= n:
        raise DataError(f"series length {series.length} too short for window {n}")
    starts = np.arange(0, series.length - n, cfg.stride)
    m = series.num_sensors
    windows = np.empty((len(starts), m, n))
    decoder = np.zeros((len(starts), cfg.label_len + 1, m))
    targets = np.empty((len(starts), m))
    for idx, s in enumerate(starts):
        windows[idx] = series.values[:, s:s + n]
        decoder[idx, :cfg.label_len] = series.values[:, s + n - cfg.label_len:s + n].T
        targets[idx] = series.values[:, s + n]
    return windows, decoder, targets, starts + n


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def save_series_csv(path: str | Path, series: RawSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["timestamp"] + list(series.names)
        if series.labels is not None:
            header.append("label")
        w.writerow(header)
        for t in range(series.length):
            row = [t] + [repr(float(v)) for v in series.values[:, t]]
            if series.labels is not None:
                row.append(int(series.labels[t]))
            w.writerow(row)


def load_series_csv(path: str | Path) -> RawSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "timestamp" or len(header) < 2:
            raise DataError(f"{path}: expected header 'timestamp,<sensors...>[,label]'")
        has_label = header[-1] == "label"
        names = header[1:-1] if has_label else header[1:]
        if not names:
            raise DataError(f"{path}: no sensor columns")
        rows = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            if any(cell.strip() == "" for cell in row):
                raise DataError(f"{path}:{lineno}: missing value (gaps are rejected)")
            try:
                vals = [float(c) for c in row[1:len(names) + 1]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            rows.append(vals)
            if has_label:
                if row[-1] not in ("0", "1"):
                    raise DataError(f"{path}:{lineno}: label must be 0 or 1")
                labels.append(int(row[-1]))
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64).T
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite sensor values")
    return RawSeries(list(names), values, np.asarray(labels) if has_label else None)


# ---------------------------------------------------------------------------
# synthetic benchmark
# ---------------------------------------------------------------------------


@dataclass
class Anomaly:
    kind: str  # spike | stuck | drift
    node: int
    start: int  # offset into the test split
    duration: int
    magnitude: float = 3.0


@dataclass
class SyntheticSpec:
    num_nodes: int
    train_len: int
    test_len: int
    edges: list[tuple[int, int]]
    lags: list[int]
    couplings: list[float]
    noise: float = 0.1
    anomalies: list[Anomaly] = field(default_factory=list)
    season_amp: float = 1.0
    ar_coeff: float = 0.8

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise DataError("synthetic spec needs at least 2 nodes")
        if len(self.edges) != len(self.lags) or len(self.edges) != len(self.couplings):
            raise DataError("edges, lags and couplings must align")
        for src, dst in self.edges:
            if src == dst:
                raise DataError(f"self-loop {src}->{dst} not allowed")
            if not (0 <= src < self.num_nodes and 0 <= dst < self.num_nodes):
                raise DataError(f"edge {src}->{dst} out of range")
        for lag in self.lags:
            if lag < 1:
                raise DataError("propagation lags must be >= 1")
        for a in self.anomalies:
            if a.kind not in ANOMALY_KINDS:
                raise DataError(f"unknown anomaly kind {a.kind!r}")
            if not (0 <= a.node < self.num_nodes):
                raise DataError(f"anomaly node {a.node} out of range")
            if a.start < 0 or a.start + a.duration > self.test_len:
                raise DataError("anomaly segment outside the test split")

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_nodes, self.num_nodes))
        for src, dst in self.edges:
            adj[src, dst] = 1.0
        return adj


def default_synthetic_spec(num_nodes: int = 10, train_len: int = 5000,
                           test_len: int = 2000, noise: float = 0.1) -> SyntheticSpec:
    """Planted 12-edge DAG over 10 nodes with 8 mixed test anomalies."""
    edges = [(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (3, 5),
             (4, 6), (5, 7), (6, 7), (1, 8), (8, 9), (4, 9)]
    lags = [1, 2, 1, 3, 2, 1, 2, 1, 2, 3, 1, 2]
    couplings = [0.9, 0.8, 0.9, 0.7, 0.8, 0.9, 0.7, 0.8, 0.7, 0.8, 0.9, 0.7]
    scale = test_len / 2000.0
    starts = [int(s * scale) for s in (150, 400, 650, 900, 1150, 1400, 1650, 1850)]
    dur = max(10, int(40 * scale))
    anomalies = [
        Anomaly("spike", 0, starts[0], dur, 3.0),
        Anomaly("stuck", 3, starts[1], max(10, int(60 * scale)), 0.0),
        Anomaly("drift", 2, starts[2], max(10, int(50 * scale)), 3.0),
        Anomaly("spike", 7, starts[3], max(10, int(30 * scale)), 3.5),
        Anomaly("stuck", 1, starts[4], max(10, int(50 * scale)), 0.0),
        Anomaly("spike", 4, starts[5], dur, 3.0),
        Anomaly("drift", 8, starts[6], max(10, int(50 * scale)), 3.0),
        Anomaly("spike", 9, starts[7], max(10, int(30 * scale)), 3.5),
    ]
    if num_nodes != 10:
        # keep a chain skeleton for non-default sizes
        edges = [(i, i + 1) for i in range(num_nodes - 1)]
        lags = [1 + i % 3 for i in range(len(edges))]
        couplings = [0.8] * len(edges)
        anomalies = [Anomaly("spike", i % num_nodes, starts[i], dur, 3.0)
                     for i in range(8)]
    for a in anomalies:
        a.duration = min(a.duration, test_len - a.start)
    return SyntheticSpec(num_nodes, train_len, test_len, edges, lags,
                         couplings, noise, anomalies)


def generate_synthetic(spec: SyntheticSpec, gen: np.random.Generator
                       ) -> tuple[RawSeries, RawSeries, np.ndarray]:
    """Return (train series, labeled test series, planted adjacency)."""
    spec.validate()
    m = spec.num_nodes
    total = spec.train_len + spec.test_len
    freqs = gen.uniform(0.005, 0.03, m)
    phases = gen.uniform(0.0, 2.0 * np.pi, m)
    eps = gen.normal(0.0, 1.0, (m, total)) * spec.noise

    t_axis = np.arange(total)
    base = spec.season_amp * np.sin(2.0 * np.pi * freqs[:, None] * t_axis + phases[:, None])
    ar = np.zeros((m, total))
    for t in range(1, total):
        ar[:, t] = spec.ar_coeff * ar[:, t - 1] + eps[:, t]
    base = base + ar

    in_edges: list[list[tuple[int, int, float]]] = [[] for _ in range(m)]
    for (src, dst), lag, coup in zip(spec.edges, spec.lags, spec.couplings):
        in_edges[dst].append((src, lag, coup))

    active: dict[int, Anomaly] = {}
    for idx, a in enumerate(spec.anomalies):
        active[idx] = a
    held: dict[int, float] = {}

    values = np.zeros((m, total))
    for t in range(total):
        for i in range(m):
            v = base[i, t]
            for src, lag, coup in in_edges[i]:
                if t >= lag:
                    v += coup * values[src, t - lag]
            off = t - spec.train_len
            if off >= 0:
                for idx, a in active.items():
                    if a.node != i or not (a.start <= off < a.start + a.duration):
                        continue
                    if a.kind == "spike":
                        v += a.magnitude
                    elif a.kind == "stuck":
                        if idx not in held:
                            held[idx] = v
                        v = held[idx]
                    elif a.kind == "drift":
                        v += a.magnitude * (off - a.start + 1) / a.duration
            values[i, t] = v

    labels = np.zeros(spec.test_len, dtype=np.int64)
    for a in spec.anomalies:
        for lo, hi in _propagated_spans(spec, a):
            labels[max(lo, 0):min(hi, spec.test_len)] = 1

    names = [f"s{i:02d}" for i in range(m)]
    train = RawSeries(names, values[:, :spec.train_len])
    test = RawSeries(names, values[:, spec.train_len:], labels)
    return train, test, spec.adjacency()


def _propagated_spans(spec: SyntheticSpec, a: Anomaly) -> list[tuple[int, int]]:
    """Anomaly span on the injected node plus lag-shifted spans on descendants."""
    spans = []
    frontier = [(a.node, a.start, a.start + a.duration)]
    seen_depth = 0
    while frontier and seen_depth <= spec.num_nodes:
        spans.extend((lo, hi) for _, lo, hi in frontier)
        nxt = []
        for node, lo, hi in frontier:
            for (src, dst), lag, _ in zip(spec.edges, spec.lags, spec.couplings):
                if src == node:
                    nxt.append((dst, lo + lag, hi + lag))
        frontier = nxt
        seen_depth += 1
    return spans


def edge_recovery_metrics(learned: AdjacencySample | np.ndarray,
                          planted: np.ndarray) -> MetricsReport:
    """Directed-edge precision/recall/F1 over ordered off-diagonal pairs."""
    learned = learned.weights.data if isinstance(learned, AdjacencySample) else np.asarray(learned)
    planted = np.asarray(planted)
    if learned.shape != planted.shape:
        raise ShapeError(f"adjacency shapes differ: {learned.shape} vs {planted.shape}")
    off = ~np.eye(learned.shape[0], dtype=bool)
    report = compute_metrics((planted[off] != 0).astype(int),
                             (learned[off] != 0).astype(int))
    return replace(report, variant="edge_recovery")
