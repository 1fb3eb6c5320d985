"""Acceptance gate: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS/FAIL lines
as they happen.  The two training criteria (C6, C7) and the throughput
criterion (C8) dominate the runtime; the whole module fits comfortably
inside its stated budgets on a desktop-class CPU.

Criterion C5 asserts the published sub-0.1% modulation-overhead figure
against the full hybrid model at 128-cubed with default widths.  Direct
accounting shows the transformer encoder alone costs ~1.4% of that model
(~0.1% of the dense 3D baseline instead), so the faithful assertion fails;
see notes in the repository history for the full arithmetic.  The test is
kept faithful rather than loosened.
"""

import time

import numpy as np
import pytest

from triplane import engine as E
from triplane.backbone import TriPlaneSet, VoxelGrid, lift_and_fuse, project_planes
from triplane.bench import bench_forward
from triplane.config import (
    FusionConfig, ModelConfig, PEConfig, PlaneConfig, VolConfig, preset,
)
from triplane.data import gen_shapes
from triplane.flops import count_model, measured_flops
from triplane.models import build_model
from triplane.train import TrainConfig, train_model
from triplane.vxg import read_vxg, write_vxg

from oracles import lift_gather

COMPLETION_DIMS = (32, 32, 32)
COMPLETION_OCCLUSION = 0.5
COMPLETION_EPOCHS = 9
CLASSIFY_DIMS = (16, 16, 16)
CLASSIFY_EPOCHS = 50
CLASSIFY_LR = 3e-3
CLASSIFY_TRAIN = 320
CLASSIFY_TEST = 100


def verdict(cid, ok, detail):
    line = f"ACCEPTANCE {cid}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    return line


# ---------------------------------------------------------------------------

def test_c1_lifting_matches_pointwise_oracle():
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        dims = tuple(int(d) for d in rng.integers(1, 9, size=3))
        c = int(rng.integers(1, 5))
        f_x = rng.standard_normal((c, dims[1], dims[2])).astype(np.float32)
        f_y = rng.standard_normal((c, dims[0], dims[2])).astype(np.float32)
        f_z = rng.standard_normal((c, dims[0], dims[1])).astype(np.float32)
        lam = rng.standard_normal(3).astype(np.float32)
        tri = TriPlaneSet(f_x=E.Tensor(f_x), f_y=E.Tensor(f_y),
                          f_z=E.Tensor(f_z), lambdas=E.Tensor(lam))
        got = lift_and_fuse(tri, dims).data
        expected = lift_gather(f_x.astype(np.float64), f_y.astype(np.float64),
                               f_z.astype(np.float64), lam)
        err = np.max(np.abs(got - expected) / np.maximum(1.0, np.abs(expected)))
        worst = max(worst, float(err))
        assert err <= 1e-6
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5.0
    assert verdict("C1", ok, f"100 configs, worst rel err {worst:.2e}, "
                             f"{elapsed:.2f}s") and ok


def test_c2_gradient_suite_all_ops_and_all_pe_modes():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1002)
    failures = []

    with E.check_mode():
        # one representative composite per differentiable primitive
        cases = {
            "elementwise": lambda x: E.sum_all(E.sigmoid(
                E.add(E.mul(x, x), E.negate(E.relu(x))))),
            "matmul": None,
            "softmax": lambda x: E.sum_all(E.mul(E.softmax(x, -1),
                                                 E.softmax(x, -1))),
            "mean_reduce": lambda x: E.sum_all(E.sigmoid(E.avg_reduce_axis(x, 1))),
            "broadcast": lambda x: E.sum_all(E.sigmoid(
                E.broadcast_along_axis(x, 1, 3))),
        }
        for name, f in cases.items():
            if name == "matmul":
                a = E.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
                b = E.Tensor(rng.standard_normal((4, 2)), requires_grad=True)
                rep = E.grad_check(lambda u, v: E.sum_all(E.sigmoid(E.matmul(u, v))),
                                   [a, b])
            else:
                x = E.Tensor(rng.standard_normal((2, 3, 4)) + 0.05,
                             requires_grad=True)
                rep = E.grad_check(f, x)
            if not rep.passed:
                failures.append(f"{name}: {rep.max_rel_err:.2e}")

        for conv_case in ("conv2d", "conv3d", "resize", "pool", "layernorm"):
            if conv_case == "conv2d":
                x = E.Tensor(rng.standard_normal((2, 4, 4)), requires_grad=True)
                w = E.Tensor(rng.standard_normal((2, 2, 3, 3)) * 0.4,
                             requires_grad=True)
                rep = E.grad_check(
                    lambda xx, ww: E.sum_all(E.sigmoid(E.conv2d(xx, ww, None, pad=1))),
                    [x, w])
            elif conv_case == "conv3d":
                x = E.Tensor(rng.standard_normal((1, 3, 3, 3)), requires_grad=True)
                w = E.Tensor(rng.standard_normal((2, 1, 3, 3, 3)) * 0.4,
                             requires_grad=True)
                rep = E.grad_check(
                    lambda xx, ww: E.sum_all(E.sigmoid(E.conv3d(xx, ww, None, pad=1))),
                    [x, w])
            elif conv_case == "resize":
                x = E.Tensor(rng.standard_normal((1, 3, 3, 3)), requires_grad=True)
                rep = E.grad_check(
                    lambda xx: E.sum_all(E.sigmoid(E.trilinear_resize(xx, (5, 2, 4)))),
                    x)
            elif conv_case == "pool":
                x = E.Tensor(rng.standard_normal((1, 4, 4, 4)), requires_grad=True)
                rep = E.grad_check(
                    lambda xx: E.sum_all(E.sigmoid(E.avg_pool(xx, (2, 2, 2)))), x)
            else:
                x = E.Tensor(rng.standard_normal((4, 6)), requires_grad=True)
                g = E.Tensor(rng.standard_normal(6), requires_grad=True)
                b = E.Tensor(rng.standard_normal(6), requires_grad=True)
                rep = E.grad_check(
                    lambda xx, gg, bb: E.sum_all(E.sigmoid(E.layernorm(xx, gg, bb))),
                    [x, g, b])
            if not rep.passed:
                failures.append(f"{conv_case}: {rep.max_rel_err:.2e}")

    # end-to-end hybrid on a 5^3 input, every modulation mode
    for mode in ("none", "sinusoidal", "coordconv", "mlp", "transformer"):
        cfg = ModelConfig(
            variant="hybrid", task="complete", dims=(5, 5, 5), feat_channels=2,
            seed=3, plane=PlaneConfig(layers=1, hidden=2, kernel=3),
            pe=PEConfig(mode=mode, model_dim=8, heads=2, max_positions=8,
                        frequencies=2, mlp_hidden=4),
            vol=VolConfig(enabled=True, ratio=0.4, layers=1, hidden=2),
            fusion=FusionConfig(layers=2))
        with E.precision("f64"):
            model = build_model(cfg)
        for name, t in model.param_items():
            if "head_pre" in name or "head_post" in name:
                t.data += 0.05 * rng.standard_normal(t.shape)
        x = E.Tensor(rng.random((1, 5, 5, 5)), requires_grad=True,
                     dtype=np.float64)
        params = [t for _, t in model.param_items()]

        def f(*tensors):
            return E.mean_all(E.sigmoid(model(tensors[-1])))

        with E.check_mode():
            rep = E.grad_check(f, params + [x], max_entries=10,
                               rng=np.random.default_rng(4))
        if not rep.passed:
            failures.append(f"hybrid/{mode}: {rep.max_rel_err:.2e}")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120.0
    assert verdict("C2", ok, f"all primitives + 5 modulation modes at tol 1e-4, "
                             f"{elapsed:.1f}s" + (f"; failures: {failures}"
                                                  if failures else "")) and ok


def test_c3_conservation_and_reduction_identities():
    rng = np.random.default_rng(1003)
    vol = rng.standard_normal((2, 6, 7, 5)).astype(np.float32)
    grid = VoxelGrid(E.Tensor(vol))
    conserved = True
    for axis, plane in enumerate(project_planes(grid)):
        lhs = vol.shape[axis + 1] * float(plane.data.sum())
        rhs = float(vol.sum())
        conserved &= abs(lhs - rhs) <= 1e-5 * max(1.0, abs(rhs))

    x = E.Tensor(rng.random((1, 8, 8, 8)).astype(np.float32))
    backbone_out = build_model(preset("backbone", dims=(8, 8, 8)))(x).data
    reduced_out = build_model(ModelConfig(
        variant="hybrid", dims=(8, 8, 8), pe=PEConfig(mode="none"),
        vol=VolConfig(enabled=False), fusion=FusionConfig(identity=True)))(x).data
    reduction_ok = np.array_equal(backbone_out, reduced_out)

    pe_off = build_model(ModelConfig(variant="hybrid", dims=(8, 8, 8),
                                     pe=PEConfig(mode="none"),
                                     vol=VolConfig(enabled=True, ratio=0.5)))(x).data
    zero_head_ok = True
    for mode in ("transformer", "sinusoidal", "mlp"):
        pe_on = build_model(preset("hybrid", dims=(8, 8, 8), pe_mode=mode))(x).data
        zero_head_ok &= np.array_equal(pe_on, pe_off)

    ok = conserved and reduction_ok and zero_head_ok
    assert verdict("C3", ok, f"conservation={conserved}, "
                             f"reduction-bitwise={reduction_ok}, "
                             f"zero-head-bitwise={zero_head_ok}") and ok


def test_c4_scaling_laws_and_instrumented_counter():
    plane32 = count_model(preset("backbone", dims=(32,) * 3)).stage("plane_encoders")
    plane64 = count_model(preset("backbone", dims=(64,) * 3)).stage("plane_encoders")
    quad = plane64 / plane32
    dense32 = count_model(preset("dense3d", dims=(32,) * 3)).stage("dense_stack")
    dense64 = count_model(preset("dense3d", dims=(64,) * 3)).stage("dense_stack")
    octu = dense64 / dense32

    worst_gap = 0.0
    for variant, pe_mode in (("backbone", None), ("hybrid", "transformer"),
                             ("dense3d", None)):
        cfg = preset(variant, task="complete", dims=(24,) * 3, ratio=0.5,
                     pe_mode=pe_mode)
        model = build_model(cfg)
        x = E.Tensor(np.random.default_rng(0).random((1, 24, 24, 24))
                     .astype(np.float32))
        analytic = count_model(cfg).total
        actual = measured_flops(model, x)
        worst_gap = max(worst_gap, abs(analytic - actual) / actual)

    ok = (abs(quad - 4.0) <= 0.4 and abs(octu - 8.0) <= 0.8
          and worst_gap <= 0.01)
    assert verdict("C4", ok, f"plane x{quad:.3f} (want 4), dense x{octu:.3f} "
                             f"(want 8), counter gap {worst_gap:.2e} "
                             f"(want <=1e-2)") and ok


def test_c5_pe_overhead_budget_at_paper_scale():
    """Faithful check of the <0.1%-of-total claim at 128^3, default widths.

    Expected to FAIL: the joint-sequence transformer encoder (384 tokens,
    model_dim 32, 2 layers, 8 heads) costs ~73 MFLOPs while the full hybrid
    model costs ~5.1 GFLOPs, a ~1.4% share - an order of magnitude over
    budget even under the most favorable reading (encoder only, token
    summarization and weight-volume application excluded).  The share does
    drop below 0.1% against the dense 3D reference model, which is the
    comparison the published figure is consistent with; that fact is
    covered as a regular passing test in test_flops_model.py.
    """
    hybrid = count_model(preset("hybrid", dims=(128,) * 3, ratio=0.5))
    dense = count_model(preset("dense3d", dims=(128,) * 3))
    share_of_hybrid = hybrid.pe_encoder_flops / hybrid.total
    share_of_dense = hybrid.pe_encoder_flops / dense.total
    ok = share_of_hybrid < 0.001
    verdict("C5", ok,
            f"encoder/hybrid = {share_of_hybrid:.4%} (criterion: <0.1%); "
            f"encoder/dense3d = {share_of_dense:.4%}")
    assert ok, (
        f"transformer modulation encoder is {share_of_hybrid:.4%} of the full "
        f"hybrid total at 128^3 with default widths; the <0.1% budget only "
        f"holds against the dense 3D baseline ({share_of_dense:.4%}).")


# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def completion_runs():
    t0 = time.perf_counter()
    train = gen_shapes(seed=101, count=400, dims=COMPLETION_DIMS,
                       task="complete", occlusion=COMPLETION_OCCLUSION)
    test = gen_shapes(seed=202, count=100, dims=COMPLETION_DIMS,
                      task="complete", occlusion=COMPLETION_OCCLUSION)
    results = {}
    for variant in ("backbone", "hybrid"):
        cfg = preset(variant, task="complete", dims=COMPLETION_DIMS, ratio=0.5)
        results[variant] = train_model(
            cfg, train, test,
            TrainConfig(epochs=COMPLETION_EPOCHS, batch_size=8, lr=1e-3, seed=0))
    results["minutes"] = (time.perf_counter() - t0) / 60.0
    return results


@pytest.mark.slow
def test_c6_completion_trend(completion_runs):
    backbone_iou = completion_runs["backbone"].best_metric
    hybrid_iou = completion_runs["hybrid"].best_metric
    minutes = completion_runs["minutes"]
    gap = hybrid_iou - backbone_iou
    ok = gap >= 0.10 and minutes <= 30.0
    assert verdict("C6", ok, f"hybrid(1/2) IoU {hybrid_iou:.4f} vs backbone "
                             f"{backbone_iou:.4f} (gap {gap:+.4f}, need >= "
                             f"+0.10) in {minutes:.1f} min") and ok


@pytest.fixture(scope="module")
def classification_runs():
    t0 = time.perf_counter()
    train = gen_shapes(seed=303, count=CLASSIFY_TRAIN, dims=CLASSIFY_DIMS,
                       task="classify")
    test = gen_shapes(seed=404, count=CLASSIFY_TEST, dims=CLASSIFY_DIMS,
                      task="classify")
    results = {}
    for variant in ("backbone", "hybrid"):
        cfg = preset(variant, task="classify", dims=CLASSIFY_DIMS, ratio=0.5)
        results[variant] = train_model(
            cfg, train, test,
            TrainConfig(epochs=CLASSIFY_EPOCHS, batch_size=8, lr=CLASSIFY_LR,
                        seed=0))
    results["minutes"] = (time.perf_counter() - t0) / 60.0
    return results


@pytest.mark.slow
def test_c7_classification_insensitivity(classification_runs):
    acc_b = classification_runs["backbone"].best_metric
    acc_h = classification_runs["hybrid"].best_metric
    gap = abs(acc_h - acc_b)
    # 0.90 floor pinned after a pilot run at this exact budget
    ok = acc_b >= 0.90 and acc_h >= 0.90 and gap <= 0.05
    assert verdict("C7", ok, f"backbone acc {acc_b:.4f}, hybrid acc {acc_h:.4f}, "
                             f"|gap| {gap:.4f} (need both >= 0.90, gap <= 0.05) "
                             f"in {classification_runs['minutes']:.1f} min") and ok


@pytest.mark.slow
def test_c8_throughput_ordering_at_64():
    t0 = time.perf_counter()
    dims = (64, 64, 64)
    thr = {}
    for label, variant, ratio in (("backbone", "backbone", 0.5),
                                  ("hybrid_quarter", "hybrid", 0.25),
                                  ("hybrid_half", "hybrid", 0.5),
                                  ("dense3d", "dense3d", 0.5)):
        cfg = preset(variant, task="complete", dims=dims, ratio=ratio)
        thr[label] = bench_forward(cfg, iters=12, warmup=4).throughput_vps
    elapsed = (time.perf_counter() - t0) / 60.0
    chain = (thr["backbone"] >= 1.10 * thr["hybrid_quarter"]
             and thr["hybrid_quarter"] >= 1.10 * thr["hybrid_half"]
             and thr["hybrid_half"] >= 1.10 * thr["dense3d"])
    ok = chain and elapsed < 5.0
    assert verdict(
        "C8", ok,
        "vol/s: " + ", ".join(f"{k}={v:.2f}" for k, v in thr.items())
        + f" (each gap >= 10%), {elapsed:.1f} min") and ok


def test_c9_format_and_cli_contract(tmp_path, capsys):
    import json as json_module
    from triplane.cli import main as cli_main

    rng = np.random.default_rng(1009)
    roundtrip_ok = True
    for i in range(50):
        c = int(rng.integers(1, 4))
        dims = tuple(int(d) for d in rng.integers(1, 9, size=3))
        arr = rng.standard_normal((c,) + dims).astype(np.float32)
        path = tmp_path / f"grid_{i}.vxg"
        write_vxg(path, arr)
        roundtrip_ok &= read_vxg(path).tobytes() == arr.tobytes()

    def run(args):
        return cli_main([str(a) for a in args])

    for sub in ("d1", "d2"):
        assert run(["gen-data", "--out", tmp_path / sub, "--seed", 11,
                    "--count", 6, "--dims", "16", "--task", "complete"]) == 0
    names = sorted(p.name for p in (tmp_path / "d1").iterdir()
                   if p.name != "report.json")
    determinism_ok = all(
        (tmp_path / "d1" / n).read_bytes() == (tmp_path / "d2" / n).read_bytes()
        for n in names)

    # induced failures: config error, I/O error, numeric error
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"variant": "quantum"}')
    code1 = run(["flops", "--config", bad_cfg])
    good_cfg = tmp_path / "good.json"
    good_cfg.write_text(preset("backbone", dims=(16, 16, 16)).to_json())
    code2 = run(["train", "--config", good_cfg, "--data", tmp_path / "missing",
                 "--out", tmp_path / "out"])
    victim = tmp_path / "d1" / "sample_00000_input.vxg"
    arr = read_vxg(victim)
    arr[0, 0, 0, 0] = np.inf
    write_vxg(victim, arr)
    cfg_complete = tmp_path / "complete.json"
    cfg_complete.write_text(preset("backbone", task="complete",
                                   dims=(16, 16, 16)).to_json())
    code3 = run(["train", "--config", cfg_complete, "--data", tmp_path / "d1",
                 "--out", tmp_path / "out3"])
    capsys.readouterr()  # swallow CLI chatter; verdicts printed below

    exit_ok = (code1, code2, code3) == (1, 2, 3)
    ok = roundtrip_ok and determinism_ok and exit_ok
    assert verdict("C9", ok, f"VXG1 50x bit-exact={roundtrip_ok}, gen-data "
                             f"deterministic={determinism_ok}, exit codes "
                             f"{(code1, code2, code3)} == (1, 2, 3)") and ok
