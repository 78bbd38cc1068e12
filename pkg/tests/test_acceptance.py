"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest -s tests/test_acceptance.py -v` to see the per-criterion
lines as they complete. The synthetic end-to-end criteria train real
models and take several minutes; everything else is fast.
"""

import time

import numpy as np
import pytest

from gtad.attention import (
    complexity_report,
    global_attention,
    local_conv_branch,
    make_attention_params,
    make_branch_params,
    make_global_params,
    multi_head,
    scaled_dot_attention,
    branch_mix,
)
from gtad.cli import main
from gtad.detector import (
    compute_metrics,
    point_adjust,
    read_score_csv,
    threshold_sweep,
)
from gtad.graphconv import ip_conv, make_message_mlp
from gtad.model import Model
from gtad.policy import gumbel_softmax_sample, hard_sample
from gtad.rng import make_generator
from gtad.data import default_synthetic_spec, edge_recovery_metrics
from gtad.policy import extract_adjacency
from gtad.tensor import Tensor, conv1d_dilated, log_softmax, softmax
from gtad.transformer import StackConfig, decoder_layer, encoder_layer, make_forecaster

from helpers import (
    brute_best_scores,
    brute_confusion,
    brute_point_adjust,
    brute_prf,
    check_grads,
)


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# criterion: gradient suite (rel err <= 1e-4, float64, dropout off, < 2 min)
# ---------------------------------------------------------------------------


class TestGradientSuite:
    def test_all_differentiable_operations(self):
        t0 = time.time()
        rng = np.random.default_rng(0)
        worst = 0.0

        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        worst = max(worst, check_grads(lambda: ((a @ b) ** 2).sum(), {"a": a, "b": b}))

        x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 5)))
        worst = max(worst, check_grads(lambda: (softmax(x, axis=-1) * w).sum(), {"x": x}))

        xc = Tensor(rng.normal(size=(2, 3, 12)), requires_grad=True)
        wc = Tensor(rng.normal(size=(4, 3, 2), scale=0.5), requires_grad=True)
        worst = max(worst, check_grads(
            lambda: (conv1d_dilated(xc, wc, dilation=2) ** 2).sum(), {"x": xc, "w": wc}))

        gen = make_generator(1)
        from gtad.policy import sample_gumbel
        from test_policy import policy_with_pi1

        pol = policy_with_pi1(3, 0.4)
        g = sample_gumbel(gen, pol.logits.shape)
        worst = max(worst, check_grads(
            lambda: (softmax((log_softmax(pol.logits, axis=-1) + g) / 0.5,
                             axis=-1)[:, :, 1] ** 2).sum(),
            {"logits": pol.logits}))

        nodes = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        adj = Tensor(rng.random((3, 3)) * (1 - np.eye(3)), requires_grad=True)
        mlp = make_message_mlp(4, gen)
        params = {"nodes": nodes, "adj": adj}
        params.update({f"mlp{i}": p for i, p in enumerate(mlp.params())})
        worst = max(worst, check_grads(
            lambda: (ip_conv(nodes, adj, mlp) ** 2).sum(), params))

        q = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        k = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        v = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
        worst = max(worst, check_grads(
            lambda: (scaled_dot_attention(q, k, v) ** 2).sum(), {"q": q, "k": k, "v": v}))

        mh = make_attention_params(6, 2, gen)
        xm = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        params = {"x": xm}
        params.update({f"mh{i}": p for i, p in enumerate(mh.params())})
        worst = max(worst, check_grads(lambda: (multi_head(xm, mh) ** 2).sum(), params))

        gl = make_global_params(4, 8, gen)
        xg = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        params = {"x": xg}
        params.update({f"gl{i}": p for i, p in enumerate(gl.params())})
        worst = max(worst, check_grads(lambda: (global_attention(xg, gl) ** 2).sum(), params))

        kl = Tensor(np.array([0.3, -0.1, 0.4]), requires_grad=True)
        xl = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        worst = max(worst, check_grads(
            lambda: (local_conv_branch(xl, kl, causal=True) ** 2).sum(),
            {"x": xl, "k": kl}))

        bp = make_branch_params(6, 1, 8, gen)
        xb = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        params = {"x": xb}
        params.update({f"bp{i}": p for i, p in enumerate(bp.params())})
        worst = max(worst, check_grads(lambda: (branch_mix(xb, bp) ** 2).sum(), params))

        from gtad.detector import ForecastBatch, mse_loss

        pred = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        obs = Tensor(rng.normal(size=(3, 5)))
        worst = max(worst, check_grads(
            lambda: mse_loss(ForecastBatch(pred, obs)), {"pred": pred}))

        fp = make_forecaster(6, 3, 3, 2, 10, StackConfig(1, 1, 8, 0.0), gen)
        xe = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        xd = Tensor(rng.normal(size=(4, 6)), requires_grad=True)

        def full_layer():
            memory = encoder_layer(xe, fp.enc_layers[0])
            return (decoder_layer(xd, memory, fp.dec_layers[0]) ** 2).sum()

        params = {"xe": xe, "xd": xd}
        for i, p in enumerate(fp.enc_layers[0].params() + fp.dec_layers[0].params()):
            params[f"layer{i}"] = p
        worst = max(worst, check_grads(full_layer, params))

        elapsed = time.time() - t0
        report("gradient suite (all ops, rel err <= 1e-4)", worst <= 1e-4 and elapsed < 120,
               f"worst rel err {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion: Gumbel-max exactness
# ---------------------------------------------------------------------------


class TestGumbelMaxExactness:
    def test_empirical_frequencies(self):
        from test_policy import policy_with_pi1

        t0 = time.time()
        gen = make_generator(20)
        m = 34  # 34 * 33 = 1122 ordered pairs per draw
        draws = 90  # ~101k samples per setting
        off = ~np.eye(m, dtype=bool)
        details = []
        ok = True
        for pi1 in (0.1, 0.3, 0.5, 0.7, 0.9):
            pol = policy_with_pi1(m, pi1)
            freq = np.mean([
                hard_sample(gumbel_softmax_sample(pol, 0.1, gen)).weights.data[off].mean()
                for _ in range(draws)
            ])
            details.append(f"pi1={pi1}: {freq:.4f}")
            ok = ok and abs(freq - pi1) < 0.02
        elapsed = time.time() - t0
        report("gumbel-max exactness (+-0.02 over 1e5 samples)",
               ok and elapsed < 30, "; ".join(details) + f"; {elapsed:.1f}s")


class TestGumbelSoftmaxLimits:
    def test_low_and_high_temperature(self):
        from test_policy import policy_with_pi1

        t0 = time.time()
        gen = make_generator(21)
        m = 46
        off = ~np.eye(m, dtype=bool)
        pol = policy_with_pi1(m, 0.995)
        maxes = np.concatenate([
            gumbel_softmax_sample(pol, 0.05, gen).soft.data[off].max(axis=-1)
            for _ in range(10)
        ])
        frac = (maxes >= 0.99).mean()

        pol_mid = policy_with_pi1(m, 0.5)
        comps = np.concatenate([
            gumbel_softmax_sample(pol_mid, 100.0, gen).soft.data[off].reshape(-1)
            for _ in range(10)
        ])
        flat = np.abs(comps - 0.5).max()
        elapsed = time.time() - t0
        report("gumbel-softmax limits (tau=0.05 one-hot, tau=100 flat)",
               frac >= 0.99 and flat <= 0.05 and elapsed < 10,
               f"saturated {frac:.4f}, max flat dev {flat:.4f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion: Table I reproduction
# ---------------------------------------------------------------------------


class TestComplexityTable:
    def test_formulas_and_crossover(self):
        t0 = time.time()
        gen = np.random.default_rng(22)
        ok = True
        for _ in range(20):
            n, d, h, m, d1, d2 = (int(gen.integers(1, 300)) for _ in range(6))
            ok = ok and complexity_report("scaled_dot", n, d, h, m, d1, d2) == (
                4 * d**2, 4 * n * d**2 + 2 * n**2 * d)
            ok = ok and complexity_report("global", n, d, h, m, d1, d2) == (
                m**2 * h + 2 * d**2, 2 * n * d**2 + n**2 * d)
            ok = ok and complexity_report("branch", n, d, h, m, d1, d2) == (
                4 * d1**2 + m**2 * h + 2 * d2**2,
                4 * n * d1**2 + n**2 * d1 + 2 * n * d2**2 + n**2 * d)
        dot = complexity_report("scaled_dot", 60, 128, 8, 64, 0, 0)[0]
        glo = complexity_report("global", 60, 128, 8, 64, 0, 0)[0]
        ok = ok and dot == glo == 65536
        elapsed = time.time() - t0
        report("Table I reproduction + crossover at m = sqrt(2/h)*d",
               ok and elapsed < 1, f"dot={dot} global={glo}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# criterion: point-adjust / metrics / sweep vs brute force
# ---------------------------------------------------------------------------


class TestMetricOracle:
    def test_200_random_cases(self):
        t0 = time.time()
        gen = np.random.default_rng(23)
        for case in range(200):
            n = int(gen.integers(1, 21))
            gt = gen.integers(0, 2, n)
            raw = gen.integers(0, 2, n)
            scores = np.round(gen.random(n), 2)  # duplicates exercise ties

            adjusted = point_adjust(gt, raw)
            np.testing.assert_array_equal(adjusted, brute_point_adjust(gt, raw))

            r = compute_metrics(gt, adjusted)
            tp, fp, fn, tn = brute_confusion(gt, adjusted)
            assert (r.tp, r.fp, r.fn, r.tn) == (tp, fp, fn, tn)
            p, rec, f1 = brute_prf(tp, fp, fn)
            assert (r.precision, r.recall, r.f1) == (p, rec, f1)

            sweep = threshold_sweep(scores, gt)
            bf, br = brute_best_scores(scores, gt)
            assert sweep.best_f1.f1 == pytest.approx(bf, abs=1e-12)
            assert sweep.best_recall.recall == pytest.approx(br, abs=1e-12)
        elapsed = time.time() - t0
        report("point-adjust/metrics/sweep vs brute force (200 cases)",
               elapsed < 10, f"{elapsed:.1f}s")
