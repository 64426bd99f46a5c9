"""Acceptance gate: nine end-to-end criteria, one printed line each.

Each test prints exactly one "A<k> PASS: ..." or "A<k> FAIL: ..." line
(bypassing capture) and then asserts, so a full run shows the scoreboard
even under default pytest output capture.

The synthetic-regression criteria (A4, A5) share one session-scoped dataset:
150 s at 30 fps = 4500 frames with the default observation noise on every
stream. Training-heavy tests run on the numpy kernel backend (see
conftest.py); this host has a single CPU, so measured wall times are a
pessimistic bound for the stated multi-core budgets.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from forcesense import evaluation, geometry, io_dataset, pipeline, synthgen
from forcesense.cli import main as cli_main
from forcesense.encoders import PointCloud, PointEncoder, encode_points
from forcesense.nn_core import (BatchNorm, Conv1d, Conv2d, Linear, Param,
                                ReLU, gradcheck, mse)
from forcesense.tcn import ForceModel, ModelConfig, TrainConfig, train

INTR = geometry.CameraIntrinsics(fx=80.0, fy=80.0, cx=7.5, cy=7.5)

# end-to-end regression fixture: 4500 frames, observation noise on
SCENE_SECONDS = 150.0
SCENE_SEED = 0
SPLIT_SEED = 0

# two-stage schedule: SGD at newton scale tolerates ~1e-4 with momentum 0.9,
# then a resumed run at base_lr 1e-5 polishes inside the noise ball
STAGE1 = dict(epochs=60, base_lr=1e-4)
STAGE2 = dict(epochs=20, base_lr=1e-5)
BATCH = 32

ABLATION_EPOCHS = 12
ABLATION_LR = 1e-4
ABLATION_SEEDS = (0, 1, 2)


def _report(capsys, tag: str, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{tag}: {detail}"


# --- shared synthetic dataset -------------------------------------------------

@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """(dataset_dir, FrameDataset, generation+load wall seconds)."""
    out = tmp_path_factory.mktemp("accept") / "ds"
    t0 = time.perf_counter()
    synthgen.generate_dataset(
        synthgen.SceneConfig(duration_s=SCENE_SECONDS, seed=SCENE_SEED), out)
    ds = pipeline.load_frame_dataset(out, INTR)
    wall = time.perf_counter() - t0
    return out, ds, wall


# --- A1: gradient integrity ---------------------------------------------------

def _window_inputs(rng, hw=(32, 32), num_points=256):
    rgb = rng.uniform(0.0, 1.0, (15, 3) + hw)
    pts = rng.standard_normal((15, num_points, 3))
    pts /= np.max(np.linalg.norm(pts, axis=2), axis=1)[:, None, None]
    return rgb, pts


def _stack_backward(model, rgb, pts, label):
    """One eval-mode forward+backward; returns the loss."""
    feats = model.encode_frames(rgb, pts, train=False, update_running=False)
    x = np.ascontiguousarray(feats.reshape(1, 15, -1).transpose(0, 2, 1))
    pred = model.tcn.forward(x, train=False)
    loss, dpred = mse(pred, label)
    dx = model.tcn.backward(dpred)
    model.encoders_backward(
        np.ascontiguousarray(dx.transpose(0, 2, 1).reshape(15, -1)))
    return loss


def test_a1_gradient_integrity(capsys):
    t0 = time.perf_counter()
    h = 1e-5
    worst = 0.0
    worst_site = ""

    def track(err, site):
        nonlocal worst, worst_site
        if err > worst:
            worst, worst_site = err, site

    for draw in range(10):
        rng = np.random.default_rng([41, draw])

        # per-layer checks at small shapes, every coordinate
        lin = Linear(6, 4, rng)
        xl = rng.standard_normal((3, 6))
        c1 = Conv1d(3, 4, 3, rng)
        x1 = rng.standard_normal((2, 3, 7))
        c2 = Conv2d(3, 4, 3, 2, rng)
        x2 = rng.standard_normal((2, 3, 8, 8))
        bn = BatchNorm(5)
        bn.gamma.value[:] = rng.uniform(0.5, 1.5, 5)
        bn.beta.value[:] = rng.standard_normal(5)
        xb = rng.standard_normal((6, 5))

        for name, layer, fwd in [
            ("linear", lin, lambda: lin.forward(xl)),
            ("conv1d", c1, lambda: c1.forward(x1)),
            ("conv2d", c2, lambda: c2.forward(x2)),
            ("batchnorm", bn,
             lambda: bn.forward(xb, train=True, update_running=False)),
        ]:
            r = np.random.default_rng([43, draw]).standard_normal(fwd().shape)
            params = [p for _, p in layer.named_params()]
            for p in params:
                p.grad[...] = 0.0
            fwd()
            layer.backward(r)
            track(gradcheck(lambda: float(np.sum(fwd() * r)), params, h=h),
                  f"{name} draw {draw}")

        # relu carries no parameters; check its input gradient instead,
        # keeping coordinates away from the kink where differences break
        xr = Param(rng.standard_normal((4, 5)))
        xr.value[np.abs(xr.value) < 1e-2] += 0.5
        rl = ReLU()
        rr = rng.standard_normal((4, 5))
        xr.grad[...] = 0.0
        rl.forward(xr.value)
        xr.grad += rl.backward(rr)
        track(gradcheck(
            lambda: float(np.sum(rl.forward(xr.value) * rr)), [xr], h=h),
            f"relu input draw {draw}")

        # full desk-width stack on one 15-frame window, eval mode (frozen
        # running stats keep the conv-bias gradient well conditioned)
        model = ForceModel(ModelConfig(), np.random.default_rng([44, draw]))
        rgb, pts = _window_inputs(rng)
        label = rng.standard_normal(1) * 10.0
        for p in model.params():
            p.grad[...] = 0.0
        _stack_backward(model, rgb, pts, label)

        def stack_loss():
            feats = model.encode_frames(rgb, pts, train=False,
                                        update_running=False)
            x = np.ascontiguousarray(
                feats.reshape(1, 15, -1).transpose(0, 2, 1))
            pred = model.tcn.forward(x, train=False)
            loss, _ = mse(pred, label)
            return loss

        track(gradcheck(stack_loss, model.params(), h=h,
                        max_coords_per_param=3,
                        rng=np.random.default_rng([45, draw])),
              f"full stack draw {draw}")

    wall = time.perf_counter() - t0
    ok = worst < 1e-4 and wall < 30.0
    _report(capsys, "A1", ok,
            f"max rel grad err {worst:.3e} (worst at {worst_site}, tol 1e-4) "
            f"over 10 draws per site, {wall:.1f}s (budget 30s)")


# --- A2: geometry oracle equivalence -------------------------------------------

def test_a2_geometry_oracle(capsys):
    from test_geometry import oracle_normalize, oracle_unproject, rel_err

    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        depth = rng.uniform(100.0, 900.0, (8, 8))
        depth[rng.random((8, 8)) < 0.25] = 0.0
        depth[0, 0] = 450.0  # keep at least one valid pixel
        intr = geometry.CameraIntrinsics(
            fx=float(rng.uniform(40, 120)), fy=float(rng.uniform(40, 120)),
            cx=float(rng.uniform(2, 6)), cy=float(rng.uniform(2, 6)))
        got = geometry.normalize_unit_sphere(
            geometry.unproject(geometry.DepthImage(depth), intr))
        want = oracle_normalize(oracle_unproject(depth, intr))
        worst = max(worst, rel_err(got.points, want))

    # downsampling must follow idx = (k*N)//m exactly, including the cycling
    # pad when fewer points than requested
    ds_ok = True
    for num, m in [(100, 17), (8, 8), (3, 7), (256, 256), (999, 256)]:
        pts = rng.standard_normal((num, 3))
        got = geometry.downsample_uniform(geometry.PointCloud(pts), m)
        want = pts[(np.arange(m) * num) // m]
        ds_ok = ds_ok and np.array_equal(got.points, want)

    wall = time.perf_counter() - t0
    ok = worst < 1e-9 and ds_ok and wall < 5.0
    _report(capsys, "A2", ok,
            f"unproject+normalize max rel dev {worst:.2e} vs scalar oracle "
            f"over 100 images (tol 1e-9), stride-rule downsample exact: "
            f"{ds_ok}, {wall:.2f}s (budget 5s)")


# --- A3: permutation invariance -------------------------------------------------

def test_a3_permutation_invariance(capsys):
    rng = np.random.default_rng(99)
    enc = PointEncoder(rng, num_points=64, mlp=(16, 32), out_features=24)
    exact = 0
    total = 0
    for _ in range(10):
        pts = rng.standard_normal((64, 3))
        base = encode_points(PointCloud(pts), enc)
        for _ in range(100):
            perm = rng.permutation(64)
            out = encode_points(PointCloud(pts[perm]), enc)
            total += 1
            exact += int(np.array_equal(out, base))
    ok = exact == total
    _report(capsys, "A3", ok,
            f"{exact}/{total} permuted encodings bitwise identical "
            f"(10 clouds x 100 permutations)")


# --- A4: end-to-end synthetic regression ---------------------------------------

def _two_stage_train(tr, va):
    cfg1 = TrainConfig(model=ModelConfig(), batch_size=BATCH, **STAGE1)
    r1 = train(tr, va, cfg1, SPLIT_SEED)
    arrays = r1.model.export_arrays()
    for (name, _), vel in zip(r1.model.named_params(), r1.velocities):
        arrays[f"opt.{name}"] = vel
    cfg2 = TrainConfig(model=ModelConfig(), batch_size=BATCH, **STAGE2)
    return train(tr, va, cfg2, SPLIT_SEED, resume_arrays=arrays,
                 resume_meta={"epochs_trained": r1.epochs_trained})


def test_a4_synthetic_end_to_end(capsys, synth_dataset):
    _, ds, gen_wall = synth_dataset
    t0 = time.perf_counter()
    tr, va, te = evaluation.make_split_windowsets(ds, n=7, seed=SPLIT_SEED)
    result = _two_stage_train(tr, va)
    preds = evaluation.predict_windowset(result.model, te)
    m = evaluation.mae(preds, te.labels)
    r = evaluation.pearson_r(preds, te.labels)
    pct = evaluation.percentage_error(m, ds.max_abs_force)
    wall = gen_wall + (time.perf_counter() - t0)
    ok = len(ds) >= 4000 and r >= 0.95 and pct <= 2.0 and wall <= 900.0
    _report(capsys, "A4", ok,
            f"{len(ds)} frames, test r={r:.4f} (need >=0.95), "
            f"pct err={pct:.3f}% (need <=2.0), mae={m:.3f} N of max "
            f"{ds.max_abs_force:.1f} N, wall {wall:.0f}s "
            f"(budget 900s for 8 cores; this host has {os.cpu_count()})")


# --- A5: ablation ordering -------------------------------------------------------

def test_a5_ablation_ordering(capsys, synth_dataset):
    _, ds, _ = synth_dataset
    per_variant = {v: [] for v in evaluation.VARIANTS}
    for seed in ABLATION_SEEDS:
        cfg = TrainConfig(model=ModelConfig(), epochs=ABLATION_EPOCHS,
                          batch_size=BATCH, base_lr=ABLATION_LR)
        for res in evaluation.run_ablation(ds, cfg, seed):
            per_variant[res.variant].append(res.report.mae)
    med = {v: float(np.median(m)) for v, m in per_variant.items()}
    single = med["single_frame_rgb"]
    tcn_meds = {v: med[v] for v in ("rgb_tcn", "pc_tcn", "rpc_tcn")}
    single_worst = all(single > m for m in tcn_meds.values())
    fusion_ok = med["rpc_tcn"] <= 1.10 * min(med["rgb_tcn"], med["pc_tcn"])
    ok = single_worst and fusion_ok
    meds = ", ".join(f"{v}={med[v]:.3f}N" for v in evaluation.VARIANTS)
    _report(capsys, "A5", ok,
            f"median test MAE over {len(ABLATION_SEEDS)} seeds: {meds}; "
            f"single-frame strictly worst: {single_worst}, "
            f"fused <= 1.10x best unimodal: {fusion_ok}")


# --- A6: published-table arithmetic fixture --------------------------------------

def test_a6_reference_table_consistency(capsys):
    all_ok, rows = evaluation.table1_consistency_check()
    n_ok = sum(r["ok"] for r in rows)
    worst = max(abs(r["recomputed_pct"] - r["printed_pct"]) for r in rows)
    _report(capsys, "A6", all_ok,
            f"{n_ok}/{len(rows)} printed percentage errors reproduced from "
            f"MAE / max-force pairs within 0.1 points (worst dev "
            f"{worst:.3f} points)")


# --- A7: published-scale width smoke test ----------------------------------------

def test_a7_paper_width_smoke(capsys):
    rng = np.random.default_rng(7)
    cfg = ModelConfig(rgb_features=4096, pc_features=512)
    model = ForceModel(cfg, np.random.default_rng([7, 0]))
    width = 4096 + 512
    rgb, pts = _window_inputs(rng)

    feats = model.encode_frames(rgb, pts, train=False, update_running=False)
    shape_ok = feats.shape == (15, width)
    for p in model.params():
        p.grad[...] = 0.0
    loss = _stack_backward(model, rgb, pts, np.array([12.0]))
    finite = bool(np.isfinite(loss)) and all(
        np.all(np.isfinite(p.grad)) for p in model.params())
    ok = shape_ok and finite
    _report(capsys, "A7", ok,
            f"concat width {width} over a 15-frame window: forward+backward "
            f"complete, loss {loss:.4f} finite and all gradients finite: "
            f"{finite}")


# --- A8: CLI determinism -----------------------------------------------------------

A8_SCENE = ["--rgb-size", "16", "--depth-size", "8", "--duration-s", "2.5"]
A8_CAM = ["--fx", "40", "--fy", "40", "--cx", "3.5", "--cy", "3.5"]
A8_MODEL = ["--rgb-hw", "16,16", "--rgb-channels", "4,8",
            "--rgb-features", "16", "--pc-points", "32", "--pc-mlp", "8,16",
            "--pc-features", "8", "--tcn-channels", "8,8"]


def _a8_run(root: Path, monkeypatch) -> bytes:
    root.mkdir(parents=True, exist_ok=True)
    monkeypatch.chdir(root)
    assert cli_main(["gen-data", "--dataset-dir", "ds", "--seed", "4",
                     "--deterministic"] + A8_SCENE) == 0
    assert cli_main(["train", "--dataset-dir", "ds", "--seed", "4",
                     "--checkpoint", "model.ckpt", "--history-csv",
                     "history.csv", "--epochs", "2", "--batch-size", "8",
                     "--deterministic"] + A8_CAM + A8_MODEL) == 0
    assert cli_main(["eval", "--dataset-dir", "ds", "--seed", "4",
                     "--checkpoint", "model.ckpt", "--split", "test",
                     "--metrics-csv", "metrics.csv", "--bins-csv", "bins.csv",
                     "--prediction-svg", "pred.svg", "--bins-svg", "bins.svg",
                     "--deterministic"] + A8_CAM + A8_MODEL) == 0
    return (root / "metrics.csv").read_bytes()


def test_a8_determinism(capsys, tmp_path, monkeypatch):
    b1 = _a8_run(tmp_path / "run1", monkeypatch)
    b2 = _a8_run(tmp_path / "run2", monkeypatch)
    ok = b1 == b2 and len(b1) > 0
    _report(capsys, "A8", ok,
            f"gen-data + train + eval reruns produced byte-identical "
            f"metrics CSVs ({len(b1)} bytes)")


# --- A9: synchronization contract ---------------------------------------------------

def _sync_stats(tmp: Path, jitter_ms: float):
    out = tmp / f"jit{jitter_ms:g}"
    synthgen.generate_dataset(
        synthgen.SceneConfig(depth_size=8, rgb_size=8, duration_s=2.0,
                             jitter_ms=jitter_ms, seed=3), out)
    streams = io_dataset.read_manifest(out / "manifest.jsonl")
    frames = io_dataset.synchronize(streams.rgb, streams.depth, streams.force,
                                    tolerance=0.010)
    return len(streams.rgb), len(frames)


def test_a9_sync_tolerance(capsys, tmp_path):
    total_lo, kept_lo = _sync_stats(tmp_path, 3.0)
    total_hi, kept_hi = _sync_stats(tmp_path, 15.0)
    ok = kept_lo == total_lo and kept_hi == 0 and total_hi > 0
    _report(capsys, "A9", ok,
            f"3 ms jitter: {total_lo - kept_lo}/{total_lo} dropped at 10 ms "
            f"tolerance; 15 ms jitter: {total_hi - kept_hi}/{total_hi} "
            f"dropped (need 0% and 100%)")
