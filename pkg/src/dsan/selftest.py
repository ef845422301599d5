"""Built-in invariant suite behind the ``selftest`` CLI command.

Each suite re-derives expected values from the naive oracles in
``dsan.oracles`` and asserts the production path matches. Failures raise
AssertionError with the violated property named.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .fourier import fft2d, ifft2d
from .losses import frequency_l1, spatial_l1, total_loss
from .metrics import psnr, ssim
from .model import build_dsan, forward, param_count
from .optim import AdamState, adam_step, cosine_lr
from .oracles import (
    adam_scalar_steps,
    conv2d_direct,
    dft2d_naive,
    fd_gradient,
    gap_direct,
    rel_err,
    rel_err_elementwise,
    ssim_naive,
    transposed_conv2d_zero_stuff,
)
from .strip import DsamConfig, dsa, dsa_oracle, dsam, receptive_field_footprint, sa
from .tensor import Tensor


def _suite_conv_oracle():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    err = rel_err(T.conv2d(Tensor(x), Tensor(w), Tensor(b), 1, 1).data, conv2d_direct(x, w, b, 1, 1))
    assert err < 1e-12, f"conv2d_vs_direct_oracle: rel err {err}"
    xs = rng.normal(size=(1, 2, 6, 6))
    ws = rng.normal(size=(2, 3, 4, 4))
    err = rel_err(T.transposed_conv2d(Tensor(xs), Tensor(ws)).data, transposed_conv2d_zero_stuff(xs, ws))
    assert err < 1e-12, f"transposed_conv_vs_zero_stuffing: rel err {err}"
    err = rel_err(T.gap(Tensor(x)).data, gap_direct(x))
    assert err < 1e-12, f"gap_vs_direct_mean: rel err {err}"


def _suite_autodiff():
    rng = np.random.default_rng(12)
    x = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True)
    out = T.conv2d(x, w, padding=1)
    T.backward(T.mean_all(T.abs_val(out)))

    def f():
        return T.mean_all(T.abs_val(T.conv2d(Tensor(x.data), Tensor(w.data), padding=1))).item()

    for t, name in ((x, "input"), (w, "weight")):
        idx = np.random.default_rng(0).choice(t.data.size, size=6, replace=False)
        err = rel_err_elementwise(t.grad.reshape(-1)[idx], fd_gradient(f, t.data, 1e-5, idx))
        assert err < 1e-4, f"finite_difference_{name}_gradient: rel err {err}"


def _suite_fft():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(1, 2, 8, 8))
    spec = fft2d(x)
    err = rel_err(spec.to_complex().view(np.float64), dft2d_naive(x).view(np.float64))
    assert err < 1e-10, f"fft_vs_naive_dft: rel err {err}"
    err = rel_err(ifft2d(spec).data, x)
    assert err < 1e-10, f"fft_roundtrip_identity: rel err {err}"
    e_sp = float((x**2).sum())
    e_fr = float((spec.magnitude() ** 2).sum()) / (8 * 8)
    assert abs(e_sp - e_fr) / e_sp < 1e-10, f"parseval_equality: {e_sp} vs {e_fr}"


def _suite_strip_oracle():
    rng = np.random.default_rng(14)
    for K in (1, 3, 5, 7):
        for d in (1, 2, 3, 4):
            x = rng.normal(size=(2, 4, 8, 8))
            a = rng.uniform(0.1, 0.9, size=(2, 4, K))
            for direction in ("horizontal", "vertical"):
                got = dsa(Tensor(x), a, K, d, direction).data
                want = dsa_oracle(x, a, K, d, direction)
                err = rel_err(got, want)
                assert err < 1e-12, f"dsa_vs_oracle K={K} d={d} {direction}: rel err {err}"
                if d == 1:
                    same = np.array_equal(got, sa(Tensor(x), a, K, direction).data)
                    assert same, f"sa_degeneration_bitwise K={K} {direction}"


def _suite_footprint():
    rng = np.random.default_rng(15)
    for K, d in ((3, 1), (3, 2), (5, 2)):
        span = d * (K - 1) + 1
        H = span + 8
        x = Tensor(rng.normal(size=(1, 1, H, H)), requires_grad=True)
        a = np.full((1, 1, K), 0.5)
        y = dsa(dsa(x, a, K, d, "horizontal"), a, K, d, "vertical")
        mask = np.zeros_like(y.data)
        c = H // 2
        mask[0, 0, c, c] = 1.0
        T.backward(T.sum_all(T.mul(y, Tensor(mask))))
        got = {(int(i) - c, int(j) - c) for i, j in zip(*np.nonzero(x.grad[0, 0]))}
        want = receptive_field_footprint(K, d)
        assert got == want, f"receptive_field_footprint K={K} d={d}: {got ^ want}"


def _suite_param_invariance():
    module_counts = set()
    model_counts = set()
    for d in (1, 2, 3, 4):
        module_counts.add(DsamConfig(((4, 3), (4, 5), (4, 7), (4, 9)), d).param_count())
        model_counts.add(param_count(build_dsan(c0=8, num_blocks=1, dilation=d, seed=0)))
    assert len(module_counts) == 1, f"dsam_param_count_varies_with_d: {module_counts}"
    assert len(model_counts) == 1, f"model_param_count_varies_with_d: {model_counts}"


def _suite_model_identity():
    rng = np.random.default_rng(16)
    m = build_dsan(c0=4, num_blocks=1, dilation=2, seed=5)
    for h in ("head4", "head5", "head6"):
        m.params[f"{h}.w"].data[:] = 0.0
        m.params[f"{h}.b"].data[:] = 0.0
    img = rng.uniform(0, 1, size=(1, 3, 16, 16))
    outs = forward(m, Tensor(img))
    assert np.array_equal(outs[0].data, img), "zeroed_heads_identity_full_scale"
    half = T.downsample2x(Tensor(img)).data
    assert np.array_equal(outs[1].data, half), "zeroed_heads_identity_half_scale"


def _suite_losses():
    rng = np.random.default_rng(17)
    a = Tensor(rng.uniform(0, 1, size=(1, 2, 8, 8)))
    assert spatial_l1(a, a).item() == 0.0, "spatial_l1_identity_zero"
    assert frequency_l1(a, a).item() == 0.0, "frequency_l1_identity_zero"
    b = Tensor(rng.uniform(0, 1, size=(1, 2, 8, 8)))
    diff = fft2d(a.data - b.data).to_complex()
    want = (np.abs(diff.real).sum() + np.abs(diff.imag).sum()) / (2 * diff.size)
    err = abs(frequency_l1(a, b).item() - want) / want
    assert err < 1e-10, f"frequency_l1_vs_dft_linearity: rel err {err}"
    rep = total_loss([a], [a], 0.1)
    assert rep.total == 0.0, "total_loss_identity_zero"


def _suite_optimizer():
    assert cosine_lr(0, 100) == 1e-4, "cosine_lr_start_exact"
    assert cosine_lr(100, 100) == 1e-6, "cosine_lr_end_exact"

    def grad(p):
        return 2.0 * (p - 3.0)

    want = adam_scalar_steps(grad, 0.0, 10, 1e-2, 1e-4, 10)
    params = {"p": Tensor(np.array(0.0), requires_grad=True)}
    state = AdamState.init(params, lr0=1e-2, lr_min=1e-4, total_steps=10)
    got = []
    for _ in range(10):
        params["p"].grad = np.asarray(grad(float(params["p"].data)))
        adam_step(params, state)
        got.append(float(params["p"].data))
    err = rel_err(np.array(got), np.array(want))
    assert err < 1e-10, f"adam_vs_scalar_oracle: rel err {err}"


def _suite_metrics():
    rng = np.random.default_rng(18)
    a = rng.uniform(0, 1, size=(3, 16, 16))
    assert psnr(a, a) == 100.0, "psnr_identity_cap"
    assert psnr(np.zeros((3, 4, 4)), np.full((3, 4, 4), 0.1)) == 20.0, "psnr_offset_exact_20db"
    assert ssim(a, a) == 1.0, "ssim_identity_one"
    b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
    err = abs(ssim(a, b) - ssim_naive(a, b))
    assert err < 1e-10, f"ssim_vs_windowed_oracle: abs err {err}"


def _suite_dsam_composition():
    rng = np.random.default_rng(19)
    cfg = DsamConfig(((2, 3), (2, 5)), 3).init_params(rng)
    x = Tensor(rng.normal(size=(2, 4, 12, 12)))
    y = dsam(x, cfg)
    assert y.shape == x.shape, "dsam_shape_preserved"
    from .strip import sam
    from dataclasses import replace

    y1 = dsam(Tensor(x.data), replace(cfg, dilation=1))
    y2 = sam(Tensor(x.data), cfg)
    assert np.array_equal(y1.data, y2.data), "dsam_d1_equals_sam_bitwise"


SUITES = [
    ("tensor_core/conv_oracles", _suite_conv_oracle),
    ("tensor_core/autodiff_fd", _suite_autodiff),
    ("tensor_core/fft", _suite_fft),
    ("strip_attention/oracle_equivalence", _suite_strip_oracle),
    ("strip_attention/footprint", _suite_footprint),
    ("strip_attention/param_invariance", _suite_param_invariance),
    ("strip_attention/dsam_composition", _suite_dsam_composition),
    ("dsan_model/zeroed_heads_identity", _suite_model_identity),
    ("losses/identities", _suite_losses),
    ("optimizer/schedule_and_oracle", _suite_optimizer),
    ("metrics/identities_and_oracle", _suite_metrics),
]


def run_selftest(report=print) -> bool:
    """Run every suite; report one PASS/FAIL line each; True when all pass."""
    ok = True
    for name, fn in SUITES:
        try:
            fn()
            report(f"PASS {name}")
        except AssertionError as e:
            ok = False
            report(f"FAIL {name}: {e}")
    return ok
