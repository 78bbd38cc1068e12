"""Training and detection drivers shared by the CLI and the test suite.

Training warms the network up on the complete graph for a few epochs with
frozen connection logits, then jointly optimizes weights and policy with
straight-through sampled graphs, an annealed temperature, and the
sparsity regularizer. Early stopping tracks validation forecast loss and
the best snapshot is what gets checkpointed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import (
    NormalizerStats,
    WindowConfig,
    load_series_csv,
    make_windows,
    median_downsample,
    normalize,
)
from .detector import ForecastBatch, mse_loss, score_series, write_score_csv
from .errors import DataError, NumericError
from .model import Model, ModelConfig
from .optim import Adam
from .policy import (
    complete_adjacency,
    edge_count,
    extract_adjacency,
    gumbel_softmax_sample,
    soft_adjacency,
    sparsity_loss,
    temperature_schedule,
)
from .rng import make_generator, split
from .tensor import Tensor, backward, no_grad


@dataclass
class EpochStats:
    epoch: int
    tau: float
    train_mse: float  # summed squared residuals over the epoch, divided by M
    train_mse_per_window: float
    sparsity: float
    edges: int
    val_mse: float
    seconds: float


@dataclass
class TrainResult:
    checkpoint: str
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def _model_config(cfg: RunConfig, num_sensors: int) -> ModelConfig:
    return ModelConfig(
        num_sensors=num_sensors, window=cfg.window, label_len=cfg.label_len,
        levels=cfg.levels, kernel=cfg.kernel, d_model=cfg.d_model, heads=cfg.heads,
        m_global=cfg.m_global, enc_layers=cfg.enc_layers, dec_layers=cfg.dec_layers,
        ffn=cfg.ffn, dropout=cfg.dropout, p_init=cfg.p_init)


def _batches(n: int, size: int, order=None):
    idx = np.arange(n) if order is None else order
    for lo in range(0, n, size):
        yield idx[lo:lo + size]


def _eval_mse(model: Model, adj, windows, decoder, targets, batch: int) -> float:
    total = 0.0
    with no_grad():
        for sel in _batches(len(windows), batch):
            pred = model.forward(Tensor(windows[sel]), Tensor(decoder[sel]), adj)
            total += float(((pred.data - targets[sel]) ** 2).sum())
    return total / targets.shape[1]


def run_training(cfg: RunConfig, log=None) -> TrainResult:
    say = log or (lambda *_: None)
    root = make_generator(cfg.seed)
    g_init, g_sample, g_order, g_drop = split(root, 4)

    series = load_series_csv(cfg.train_csv)
    if series.labels is not None:
        series.labels = None  # training split is normal-only by contract
    series = median_downsample(series, cfg.downsample)
    stats = NormalizerStats.from_training(series)
    series = normalize(series, stats)

    wcfg = WindowConfig(cfg.window, cfg.label_len, stride=1)
    windows, decoder, targets, _ = make_windows(series, wcfg)
    n_val = max(1, int(len(windows) * cfg.val_frac))
    if len(windows) <= n_val + 1:
        raise DataError("training series yields too few windows for a validation split")
    train_sel = np.arange(0, len(windows) - n_val, cfg.train_stride)
    val_sel = np.arange(len(windows) - n_val, len(windows))
    m = series.num_sensors

    model = Model(_model_config(cfg, m), g_init)
    learned = cfg.graph_mode == "learned"
    opt_net = Adam([(model.network_params(), cfg.lr)], cfg.beta1, cfg.beta2)
    opt_pol = Adam([([model.policy.logits], cfg.policy_lr)], cfg.beta1, cfg.beta2)

    result = TrainResult(checkpoint=cfg.checkpoint)
    best_val = np.inf
    best_state: dict[str, np.ndarray] = {}
    strikes = 0
    n_train_windows = len(train_sel)

    for epoch in range(cfg.epochs):
        t0 = time.time()
        warm = learned and epoch < cfg.warmup_epochs
        policy_active = learned and not warm
        tau = temperature_schedule(max(0, epoch - cfg.warmup_epochs),
                                   cfg.tau_start, cfg.tau_decay, cfg.tau_floor)
        order = g_order.permutation(train_sel)
        mse_sum = 0.0
        for sel in _batches(n_train_windows, cfg.batch, order):
            if policy_active:
                # soft sampled weights scale messages during training; evaluation
                # and validation use the thresholded hard graph
                adj = soft_adjacency(gumbel_softmax_sample(model.policy, tau, g_sample))
            else:
                adj = complete_adjacency(m)
            pred = model.forward(Tensor(windows[sel]), Tensor(decoder[sel]), adj,
                                 drop_p=cfg.dropout, gen=g_drop)
            batch_loss = mse_loss(ForecastBatch(pred.transpose(),
                                                Tensor(targets[sel]).transpose()))
            loss = batch_loss
            if policy_active and cfg.lambda_s > 0.0:
                loss = loss + cfg.lambda_s * sparsity_loss(model.policy)
            if not np.isfinite(loss.data):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}: forecast diverged "
                    f"(mse={float(batch_loss.data):g}); lower lr or check the data")
            backward(loss)
            opt_net.step()
            opt_net.zero_grad()
            if policy_active:
                opt_pol.step()
            opt_pol.zero_grad()
            mse_sum += float(batch_loss.data)

        eval_adj = extract_adjacency(model.policy, cfg.edge_threshold) if learned \
            else complete_adjacency(m)
        val_mse = _eval_mse(model, eval_adj, windows[val_sel], decoder[val_sel],
                            targets[val_sel], cfg.batch)
        stats_row = EpochStats(
            epoch=epoch, tau=tau, train_mse=mse_sum,
            train_mse_per_window=mse_sum / n_train_windows,
            sparsity=float(sparsity_loss(model.policy).data),
            edges=edge_count(model.policy, cfg.edge_threshold),
            val_mse=val_mse, seconds=time.time() - t0)
        result.history.append(stats_row)
        say(f"epoch {epoch:3d} tau={tau:.3f} train_mse={stats_row.train_mse_per_window:.5f} "
            f"val_mse={val_mse:.4f} edges={stats_row.edges} ({stats_row.seconds:.1f}s)")

        if val_mse < best_val:
            best_val = val_mse
            result.best_epoch = epoch
            best_state = {k: p.data.copy() for k, p in model.named_params().items()}
            strikes = 0
        else:
            strikes += 1
            if strikes >= cfg.patience:
                result.stopped_early = True
                break

    for name, p in model.named_params().items():
        p.data[...] = best_state[name]
    Path(cfg.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    model.save(cfg.checkpoint, extra={"norm/min": stats.vmin, "norm/max": stats.vmax})
    return result


def write_train_log(path: str | Path, cfg: RunConfig, result: TrainResult) -> None:
    lines = [f"# seed={cfg.seed} graph_mode={cfg.graph_mode} lambda_s={cfg.lambda_s}",
             "epoch,tau,train_mse,train_mse_per_window,sparsity,edges,val_mse,seconds"]
    for r in result.history:
        lines.append(f"{r.epoch},{r.tau:.6g},{r.train_mse:.10g},"
                     f"{r.train_mse_per_window:.10g},{r.sparsity:.10g},{r.edges},"
                     f"{r.val_mse:.10g},{r.seconds:.3f}")
    Path(path).write_text("\n".join(lines) + "\n")


def run_detection(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Score the test series with a trained checkpoint; writes the score CSV.

    Returns (timestamps, scores, ground-truth labels); timestamps index the
    (possibly downsampled) test series.
    """
    model, extra = Model.load(cfg.checkpoint)
    if "norm/min" not in extra or "norm/max" not in extra:
        raise DataError(f"{cfg.checkpoint}: missing normalizer statistics")
    stats = NormalizerStats(extra["norm/min"], extra["norm/max"])

    series = load_series_csv(cfg.test_csv)
    series = median_downsample(series, cfg.downsample)
    if series.num_sensors != model.cfg.num_sensors:
        raise DataError(f"test series has {series.num_sensors} sensors, checkpoint "
                        f"expects {model.cfg.num_sensors}")
    labels = series.labels if series.labels is not None \
        else np.zeros(series.length, dtype=np.int64)
    series = normalize(series, stats)

    wcfg = WindowConfig(model.cfg.window, model.cfg.label_len, stride=1)
    windows, decoder, targets, times = make_windows(series, wcfg)
    adj = extract_adjacency(model.policy, cfg.edge_threshold) \
        if cfg.graph_mode == "learned" else complete_adjacency(model.cfg.num_sensors)

    preds = np.empty_like(targets)
    with no_grad():
        for sel in _batches(len(windows), cfg.batch):
            preds[sel] = model.forward(Tensor(windows[sel]), Tensor(decoder[sel]), adj).data
    scores = score_series(preds, targets)
    gt = labels[times]
    flagged = (scores > cfg.detect_threshold).astype(np.int64)
    out = Path(cfg.out_dir) / cfg.scores_csv
    out.parent.mkdir(parents=True, exist_ok=True)
    write_score_csv(out, times, scores, gt, flagged)
    return times, scores, gt
