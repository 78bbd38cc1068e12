"""Command surface: synth | train | detect | eval | graph-report | bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .attention import complexity_report
from .config import RunConfig, build_config, synthetic_spec_from
from .data import (
    edge_recovery_metrics,
    generate_synthetic,
    save_series_csv,
)
from .detector import format_report, read_score_csv, threshold_sweep
from .errors import DataError, NumericError, ShapeError, UsageError
from .model import Model
from .policy import export_edge_list
from .rng import make_generator
from .train import run_detection, run_training, write_train_log

_INT_FIELDS = {f.name for f in fields(RunConfig) if f.type == "int"}
_FLOAT_FIELDS = {f.name for f in fields(RunConfig) if f.type == "float"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key=value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _INT_FIELDS:
            parser.add_argument(flag, type=int, default=None, dest=f.name)
        elif f.name in _FLOAT_FIELDS:
            parser.add_argument(flag, type=float, default=None, dest=f.name)
        else:
            parser.add_argument(flag, default=None, dest=f.name)
    parser.add_argument("--out", default=None, dest="out_dir_alias",
                        help="alias for --out-dir")


def _config_from(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    if args.out_dir_alias is not None:
        overrides["out_dir"] = args.out_dir_alias
    return build_config(args.config, overrides)


def cmd_synth(args) -> int:
    cfg = _config_from(args)
    spec = synthetic_spec_from(cfg)
    gen = make_generator(cfg.seed)
    train, test, adjacency = generate_synthetic(spec, gen)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_series_csv(out / "train.csv", train)
    save_series_csv(out / "test.csv", test)
    edge_lines = [f"{src},{dst}" for src, dst in sorted(spec.edges)]
    (out / "graph_true.txt").write_text("\n".join(edge_lines) + "\n")
    print(f"# seed={cfg.seed}")
    print(f"wrote {out / 'train.csv'} ({train.num_sensors}x{train.length}), "
          f"{out / 'test.csv'} ({test.num_sensors}x{test.length}, "
          f"{int(test.labels.sum())} anomalous points), "
          f"{out / 'graph_true.txt'} ({len(spec.edges)} edges)")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from(args)
    print(f"# seed={cfg.seed} graph_mode={cfg.graph_mode} lambda_s={cfg.lambda_s}",
          flush=True)
    result = run_training(cfg, log=lambda msg: print(msg, flush=True))
    log_path = Path(cfg.out_dir) / "train_log.csv"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    write_train_log(log_path, cfg, result)
    tag = "early-stopped" if result.stopped_early else "completed"
    print(f"{tag}; best epoch {result.best_epoch}; checkpoint {cfg.checkpoint}; "
          f"log {log_path}")
    return 0


def cmd_detect(args) -> int:
    cfg = _config_from(args)
    print(f"# seed={cfg.seed}")
    times, scores, _ = run_detection(cfg)
    print(f"scored {len(scores)} timestamps ({times[0]}..{times[-1]}) -> "
          f"{Path(cfg.out_dir) / cfg.scores_csv}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from(args)
    path = Path(cfg.out_dir) / cfg.scores_csv
    _, scores, gt, _ = read_score_csv(path)
    if len(scores) != len(gt):
        raise DataError(f"{path}: misaligned columns")
    sweep = threshold_sweep(scores, gt)
    print(f"# seed={cfg.seed} scores={path}")
    print(format_report(sweep))
    return 0


def cmd_graph_report(args) -> int:
    cfg = _config_from(args)
    model, _ = Model.load(cfg.checkpoint)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "graph_learned.txt"
    n = export_edge_list(model.policy, path, cfg.edge_threshold)
    print(f"# seed={cfg.seed}")
    print(f"{n} edges above pi1 > {cfg.edge_threshold} -> {path}")
    if cfg.graph_true:
        planted = _read_edge_file(cfg.graph_true, model.cfg.num_sensors)
        learned = (model.policy.pi1() > cfg.edge_threshold).astype(float)
        np.fill_diagonal(learned, 0.0)
        r = edge_recovery_metrics(learned, planted)
        print(f"edge recovery vs {cfg.graph_true}: precision={r.precision:.4f} "
              f"recall={r.recall:.4f} f1={r.f1:.4f}")
    return 0


def _read_edge_file(path: str, num_nodes: int) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{path}: no such edge file")
    adj = np.zeros((num_nodes, num_nodes))
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        bits = line.split(",")
        src, dst = int(bits[0]), int(bits[1])
        adj[src, dst] = 1.0
    return adj


def cmd_bench(args) -> int:
    cfg = _config_from(args)
    from .attention import (
        BranchConfig,
        branch_mix,
        global_attention,
        make_attention_params,
        make_branch_params,
        make_global_params,
        multi_head,
    )
    from .tensor import Tensor, no_grad

    n, d, h, m = args.n, cfg.d_model, cfg.heads, cfg.m_global
    split = BranchConfig.split(d, h)
    d1, d2 = split.d1, split.d2
    gen = make_generator(cfg.seed)
    x = Tensor(gen.normal(size=(n, d)))
    mh = make_attention_params(d, h, gen)
    gl = make_global_params(d, max(m, n), gen)
    bp = make_branch_params(d, h, max(m, n), gen)

    def clock(fn):
        with no_grad():
            fn()  # warm
            t0 = time.perf_counter()
            for _ in range(5):
                fn()
            return (time.perf_counter() - t0) / 5.0

    rows = [
        ("scaled-dot-product", "scaled_dot", lambda: multi_head(x, mh)),
        ("global-learned", "global", lambda: global_attention(x, gl)),
        ("branch-wise-mixing", "branch", lambda: branch_mix(x, bp)),
    ]
    print(f"# seed={cfg.seed} n={n} d={d} h={h} m={m} d1={d1} d2={d2}")
    print(f"{'attention type':<22} {'params':>12} {'mult-adds':>16} {'forward (ms)':>14}")
    for label, kind, fn in rows:
        params, mult_adds = complexity_report(kind, n, d, h, m, d1, d2)
        ms = clock(fn) * 1e3
        print(f"{label:<22} {params:>12} {mult_adds:>16} {ms:>14.3f}")
    return 0


def main(argv=None) -> int:
    parser = _Parser(prog="gtad",
                     description="Graph-learning transformer anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {}
    for name, fn, extra in (
        ("synth", cmd_synth, None),
        ("train", cmd_train, None),
        ("detect", cmd_detect, None),
        ("eval", cmd_eval, None),
        ("graph-report", cmd_graph_report, None),
        ("bench", cmd_bench, "n"),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        if extra == "n":
            p.add_argument("--n", type=int, default=60, help="sequence length")
        handlers[name] = fn

    try:
        args = parser.parse_args(argv)
        return handlers[args.command](args)
    except (UsageError, ShapeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
