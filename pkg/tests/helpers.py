"""Shared test oracles.

The finite-difference checker relies only on repeated forward evaluation,
so it stays independent of every backward rule it is used to verify.
"""

from __future__ import annotations

import numpy as np

from gtad.tensor import Tensor, backward, no_grad


def numeric_grad(f, x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar-valued f with respect to x."""
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference over the larger of the two max magnitudes."""
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def brute_point_adjust(gt, preds):
    """Scan-based segment adjustment, written independently of the library."""
    gt = list(gt)
    out = list(preds)
    i = 0
    while i < len(gt):
        if gt[i] == 1:
            j = i
            while j < len(gt) and gt[j] == 1:
                j += 1
            if any(out[i:j]):
                for k in range(i, j):
                    out[k] = 1
            i = j
        else:
            i += 1
    return out


def brute_confusion(gt, preds):
    tp = fp = fn = tn = 0
    for g, p in zip(gt, preds):
        if g == 1 and p == 1:
            tp += 1
        elif g == 0 and p == 1:
            fp += 1
        elif g == 1 and p == 0:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def brute_prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def brute_best_scores(scores, gt):
    """Exhaustive sweep over every cut position; returns (best_f1, best_recall)."""
    candidates = [float("-inf")] + sorted(set(float(s) for s in scores))
    best_f1 = 0.0
    best_recall = 0.0
    for v in candidates:
        preds = [1 if s > v else 0 for s in scores]
        adj = brute_point_adjust(gt, preds)
        tp, fp, fn, _ = brute_confusion(gt, adj)
        _, recall, f1 = brute_prf(tp, fp, fn)
        best_f1 = max(best_f1, f1)
        best_recall = max(best_recall, recall)
    return best_f1, best_recall


def check_grads(build_loss, params: dict[str, Tensor], tol: float = 1e-4, h: float = 1e-5):
    """Compare analytic gradients of build_loss() against central differences.

    build_loss must rerun the full forward pass each call (it is invoked
    once per perturbation). Returns the worst relative error seen.
    """
    loss = build_loss()
    backward(loss)
    analytic = {name: p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        num = numeric_grad(build_loss, p, h=h)
        err = rel_err(analytic[name], num)
        assert err <= tol, f"gradient mismatch for {name}: rel err {err:.3e} > {tol:.1e}"
        worst = max(worst, err)
    for p in params.values():
        p.grad = None
    return worst
