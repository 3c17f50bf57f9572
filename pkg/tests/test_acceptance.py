"""Acceptance suite: one test per release criterion, each printing a verdict.

Criteria 1 and 6 drive the CLI exactly as a user would; the others exercise
the library at the same configuration. The noisy 20-seed study is shared
between the recovery and ordering criteria.
"""

import json
import math
import time

import numpy as np
import pytest

import epcal as ec
from epcal import io as eio
from epcal.cli import main

REF_EP_FLAG = "0.0851,-0.2577,0.3016,0.5368"
REF_K_FLAG = "0.0109,-0.0013,0.0008,-0.0004"

PASS_LINES = []


def record(criterion, detail):
    line = f"[acceptance] criterion {criterion}: PASS - {detail}"
    PASS_LINES.append(line)
    print(line)


@pytest.fixture(scope="session", autouse=True)
def summary():
    yield
    print()
    for line in PASS_LINES:
        print(line)


def reference_model():
    return ec.CameraModel(
        ec.CameraIntrinsics(601.75, 601.75, 0.0, 1024.0, 1024.0),
        ec.REFERENCE_RADIAL,
        ec.REFERENCE_EP,
    )


# ---------------------------------------------------------------------------
# Criterion 1: noise-free synth -> calibrate recovers every parameter
# ---------------------------------------------------------------------------

def test_criterion_1_noise_free_round_trip(tmp_path):
    ds, gt, fit = tmp_path / "ds.json", tmp_path / "gt.json", tmp_path / "fit.json"
    t0 = time.perf_counter()
    assert main([
        "synth", "--output", str(ds), "--gt-output", str(gt),
        "--poses", "25", "--rows", "7", "--cols", "11", "--spacing", "10",
        "--dist-min", "100", "--dist-max", "150", "--noise", "0", "--seed", "7",
        "--fov", "195", "--width", "2048", "--height", "2048",
        "--ep", REF_EP_FLAG, "--k", REF_K_FLAG,
    ]) == 0
    assert main([
        "calibrate", "--input", str(ds), "--output", str(fit), "--kind", "nsvp",
    ]) == 0
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0

    truth = eio.load_model(gt)
    fitted = eio.load_model(fit)
    assert fitted.stats.converged
    assert fitted.stats.rms_px < 1e-8
    p_true = ec.pack_parameters(truth.model, truth.poses)
    p_fit = ec.pack_parameters(fitted.model, fitted.poses)
    np.testing.assert_allclose(p_fit, p_true, rtol=1e-6, atol=1e-6)
    record(1, f"rms {fitted.stats.rms_px:.2e} px, max param error "
               f"{np.abs(p_fit - p_true).max():.2e}, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# Criteria 2 + 3: noisy recovery and model-nesting ordering over 20 seeds
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def noisy_study():
    model = reference_model()
    spec = ec.TargetSpec(7, 11, 10.0)
    runs = []
    for seed in range(20):
        config = ec.SynthConfig(model, spec, n_poses=25, noise_px=0.1,
                                seed=1000 + seed)
        dataset = ec.render_dataset(config)
        est = ec.initial_estimate(dataset)
        nsvp0 = ec.CameraModel(est.intrinsics, est.radial, est.ep,
                               ec.ModelKind.NSVP, model.theta_max)
        r_nsvp = ec.lm_solve(nsvp0, est.poses, dataset)
        svp0 = ec.CameraModel(est.intrinsics, est.radial, est.ep,
                              ec.ModelKind.SVP, model.theta_max)
        r_svp = ec.lm_solve(
            svp0, est.poses, dataset,
            ec.SolveOptions(fixed=ec.svp_parameter_mask(dataset.n_views)),
        )
        runs.append((r_nsvp, r_svp))
    return model, runs


def test_criterion_2_noisy_recovery(noisy_study):
    model, runs = noisy_study
    assert all(rn.converged for rn, _ in runs)
    rms = np.array([rn.rms_px for rn, _ in runs])
    fx_rel = np.array([
        abs(rn.model.intrinsics.fx - model.intrinsics.fx) / model.intrinsics.fx
        for rn, _ in runs
    ])
    fy_rel = np.array([
        abs(rn.model.intrinsics.fy - model.intrinsics.fy) / model.intrinsics.fy
        for rn, _ in runs
    ])
    u0_err = np.array([
        abs(rn.model.intrinsics.u0 - model.intrinsics.u0) for rn, _ in runs
    ])
    v0_err = np.array([
        abs(rn.model.intrinsics.v0 - model.intrinsics.v0) for rn, _ in runs
    ])
    assert 0.07 <= float(np.median(rms)) <= 0.13
    assert float(np.median(fx_rel)) < 0.005
    assert float(np.median(fy_rel)) < 0.005
    assert float(np.median(u0_err)) < 0.5
    assert float(np.median(v0_err)) < 0.5
    record(2, f"median rms {np.median(rms):.4f} px, median fx err "
               f"{np.median(fx_rel):.2e}, median u0 err {np.median(u0_err):.3f} px")


def test_criterion_3_model_nesting_ordering(noisy_study):
    model, runs = noisy_study
    wins = sum(1 for rn, rs in runs if rn.rms_px < rs.rms_px)
    assert wins >= 19

    # Entrance-pupil-free world: the richer model ties within solver slop.
    svp_gt = ec.CameraModel.svp(model.intrinsics, model.radial, model.theta_max)
    config = ec.SynthConfig(svp_gt, ec.TargetSpec(7, 11, 10.0), n_poses=25,
                            noise_px=0.1, seed=77)
    dataset = ec.render_dataset(config)
    est = ec.initial_estimate(dataset)
    r_nsvp = ec.lm_solve(
        ec.CameraModel(est.intrinsics, est.radial, est.ep,
                       ec.ModelKind.NSVP, svp_gt.theta_max),
        est.poses, dataset,
    )
    r_svp = ec.lm_solve(
        ec.CameraModel(est.intrinsics, est.radial, est.ep,
                       ec.ModelKind.SVP, svp_gt.theta_max),
        est.poses, dataset,
        ec.SolveOptions(fixed=ec.svp_parameter_mask(dataset.n_views)),
    )
    assert r_nsvp.rms_px <= r_svp.rms_px + 1e-9
    record(3, f"NSVP wins {wins}/20 on EP data; tie holds on EP-free data "
               f"({r_nsvp.rms_px:.6f} <= {r_svp.rms_px:.6f} + 1e-9)")


# ---------------------------------------------------------------------------
# Criterion 4: Jacobian against a 5-point stencil, block sparsity exact
# ---------------------------------------------------------------------------

def test_criterion_4_jacobian_correctness():
    rng = np.random.default_rng(44)
    worst = 0.0
    for trial in range(10):
        model = ec.CameraModel(
            ec.CameraIntrinsics(
                601.75 * rng.uniform(0.9, 1.1), 601.75 * rng.uniform(0.9, 1.1),
                rng.uniform(-0.5, 0.5),
                1024.0 + rng.uniform(-20, 20), 1024.0 + rng.uniform(-20, 20),
            ),
            ec.REFERENCE_RADIAL, ec.REFERENCE_EP,
        )
        config = ec.SynthConfig(
            model, ec.TargetSpec(4, 5, 14.0), n_poses=2,
            noise_px=0.05, seed=500 + trial,
        )
        dataset = ec.render_dataset(config)
        params = ec.pack_parameters(model, dataset.ground_truth.poses)
        params = params * (1.0 + 0.001 * rng.standard_normal(params.size))
        jac = ec.numeric_jacobian(params, dataset)

        stencil = np.zeros_like(jac)
        for c in range(params.size):
            h = max(1e-6, 1e-7 * abs(params[c]))

            def res_at(delta, c=c):
                p = params.copy()
                p[c] += delta
                return ec.residual_vector(p, dataset)

            stencil[:, c] = (
                -res_at(2 * h) + 8 * res_at(h) - 8 * res_at(-h) + res_at(-2 * h)
            ) / (12 * h)
        rel = np.linalg.norm(jac - stencil) / np.linalg.norm(stencil)
        worst = max(worst, rel)
        assert rel < 1e-5

        start = 0
        for j, view in enumerate(dataset.views):
            stop = start + 2 * view.n_points
            others = np.ones(params.size, dtype=bool)
            others[:ec.N_GLOBAL] = False
            others[ec.optim.pose_parameter_slice(j)] = False
            assert np.all(jac[start:stop][:, others] == 0.0)
            start = stop
    record(4, f"worst stencil deviation {worst:.2e} over 10 configs; "
               "pose blocks exactly sparse")


# ---------------------------------------------------------------------------
# Criterion 5: projection invariant suite, 1000+ randomized cases each
# ---------------------------------------------------------------------------

def test_criterion_5_projection_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    intr = ec.CameraIntrinsics(601.75, 601.75, 0.1, 1024.0, 1024.0)

    # SVP == NSVP at ep = 0, 1000 points
    svp = ec.CameraModel.svp(intr, ec.REFERENCE_RADIAL)
    nsvp0 = ec.CameraModel(intr, ec.REFERENCE_RADIAL, ec.EntrancePupil())
    checked = 0
    while checked < 1000:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pose = ec.Pose(axis * rng.uniform(0, 0.4),
                       (rng.uniform(-10, 10), rng.uniform(-10, 10),
                        rng.uniform(100, 150)))
        pts = rng.uniform(-55, 55, size=(100, 2))
        a = ec.project(svp, pose, pts)
        b = ec.project(nsvp0, pose, pts)
        assert np.abs(a - b).max() < 1e-15
        checked += pts.shape[0]

    # On-axis center fixed point for 1000 random models
    for _ in range(1000):
        m = ec.CameraModel(
            ec.CameraIntrinsics(
                rng.uniform(300, 900), rng.uniform(300, 900),
                rng.uniform(-1, 1), rng.uniform(500, 1500), rng.uniform(500, 1500),
            ),
            ec.RadialDistortion(*rng.uniform(-0.02, 0.02, size=4)),
            ec.EntrancePupil(*rng.uniform(-0.5, 0.6, size=4)),
        )
        pose = ec.Pose(np.zeros(3), (0.0, 0.0, rng.uniform(80, 200)))
        pix = ec.project(m, pose, (0.0, 0.0))
        assert pix[0] == m.intrinsics.u0 and pix[1] == m.intrinsics.v0

    # Radial round trip on 1000 angles
    thetas = rng.uniform(0.0, ec.DEFAULT_THETA_MAX, size=1000)
    for theta in thetas:
        r = ec.radial_distance(float(theta), ec.REFERENCE_RADIAL)
        assert abs(
            ec.invert_radial(r, ec.REFERENCE_RADIAL, ec.DEFAULT_THETA_MAX) - theta
        ) < 1e-10

    # Rotation round trip on 1000 axis-angle vectors
    for _ in range(1000):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        v = d * rng.uniform(1e-9, math.pi - 1e-3)
        assert np.abs(
            ec.matrix_to_rodrigues(ec.rodrigues_to_matrix(v)) - v
        ).max() < 1e-9

    # Fixed-point self-consistency on 1000 pose/point draws
    tol = 1e-12
    done = 0
    while done < 1000:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        pose = ec.Pose(axis * rng.uniform(0, 0.4),
                       (rng.uniform(-10, 10), rng.uniform(-10, 10),
                        rng.uniform(100, 150)))
        pts = rng.uniform(-55, 55, size=(50, 2))
        thetas = ec.resolve_theta_nsvp(pose, pts, ec.REFERENCE_EP, tol=tol)
        shifts = ec.ep_shift(thetas, ec.REFERENCE_EP)
        cams = ec.transform_world_to_camera(pose, pts, shifts)
        again = ec.incidence_angle(cams)
        assert np.abs(thetas - again).max() < 2 * tol
        done += pts.shape[0]

    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    record(5, f"five invariant families x 1000 cases in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# Criterion 6: stability study shape and zero-noise limit
# ---------------------------------------------------------------------------

def test_criterion_6_stability_study(tmp_path):
    out = tmp_path / "stability.csv"
    assert main([
        "stability", "--trials", "100", "--noise", "0.1", "--kinds", "svp,nsvp",
        "--seed", "3", "--output", str(out),
    ]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "group,SVP,NSVP"
    names = [line.split(",")[0] for line in lines[1:]]
    assert names == ["fx_fy", "sk", "u0_v0", "e1_e4", "k1_k4",
                     "trials_used", "trials_excluded"]
    used = [int(c) for c in lines[-2].split(",")[1:]]
    excluded = [int(c) for c in lines[-1].split(",")[1:]]
    assert all(u + e == 100 for u, e in zip(used, excluded))
    for line in lines[1:6]:
        cells = line.split(",")[1:]
        assert len(cells) == 2
        assert all(np.isfinite(float(c)) for c in cells)

    # Zero-noise limit, each kind on ground truth inside its own model class.
    svp_out = tmp_path / "stab_svp0.csv"
    assert main([
        "stability", "--trials", "10", "--noise", "0", "--kinds", "svp",
        "--seed", "3", "--output", str(svp_out), "--ep", "0,0,0,0",
    ]) == 0
    nsvp_out = tmp_path / "stab_nsvp0.csv"
    assert main([
        "stability", "--trials", "10", "--noise", "0", "--kinds", "nsvp",
        "--seed", "3", "--output", str(nsvp_out),
    ]) == 0
    worst = 0.0
    for path in (svp_out, nsvp_out):
        for line in path.read_text().splitlines()[1:6]:
            for cell in line.split(",")[1:]:
                worst = max(worst, float(cell))
                assert float(cell) < 1e-7
    record(6, f"100-trial CSV structured as required; zero-noise scatter "
               f"<= {worst:.2e}")


# ---------------------------------------------------------------------------
# Criterion 7: near-field entrance-pupil sensitivity
# ---------------------------------------------------------------------------

def test_criterion_7_near_field_sensitivity():
    model = reference_model()
    svp = ec.CameraModel.svp(model.intrinsics, model.radial, model.theta_max)
    pts = ec.generate_target(ec.TargetSpec(7, 11, 10.0))

    def mean_disp(distance):
        pose = ec.Pose(np.zeros(3), (0.0, 0.0, distance))
        return float(np.linalg.norm(
            ec.project(model, pose, pts) - ec.project(svp, pose, pts), axis=1
        ).mean())

    near, far = mean_disp(100.0), mean_disp(150.0)
    assert near > far
    record(7, f"mean displacement {near:.5f} px at 100 mm > {far:.5f} px at 150 mm")


# ---------------------------------------------------------------------------
# Criterion 8: IO round trips and typed failures
# ---------------------------------------------------------------------------

def test_criterion_8_io_contract(tmp_path):
    model = reference_model()
    config = ec.SynthConfig(model, ec.TargetSpec(7, 11, 10.0), n_poses=3,
                            noise_px=0.1, seed=88)
    dataset = ec.render_dataset(config)
    ds_path = tmp_path / "ds.json"
    eio.save_dataset(dataset, ds_path)
    loaded = eio.load_dataset(ds_path)
    for a, b in zip(loaded.views, dataset.views):
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.target_indices, b.target_indices)
    assert loaded.ground_truth.model == dataset.ground_truth.model

    mf = eio.ModelFile(model, dataset.ground_truth.poses,
                       eio.RunStats(0.1956, 0.0735, 12, True))
    m_path = tmp_path / "m.json"
    eio.save_model(mf, m_path)
    back = eio.load_model(m_path)
    assert back.model == mf.model
    assert back.stats == mf.stats
    for a, b in zip(back.poses, mf.poses):
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)

    base = json.loads(ds_path.read_text())
    model_doc = json.loads(m_path.read_text())

    def mutate(doc, fn):
        clone = json.loads(json.dumps(doc))
        fn(clone)
        return json.dumps(clone)

    malformed = [
        ("truncated", ds_path.read_text()[:60], eio.ParseError, eio.load_dataset),
        ("not json", "parameter,SVP\nfx,591.73\n", eio.ParseError, eio.load_dataset),
        ("bad schema", mutate(base, lambda d: d.update(schema_version=99)),
         eio.SchemaError, eio.load_dataset),
        ("no schema", mutate(base, lambda d: d.pop("schema_version")),
         eio.SchemaError, eio.load_dataset),
        ("array root", "[]", eio.ValidationError, eio.load_dataset),
        ("index range", mutate(base, lambda d: d["observations"][0]["points"][0]
                               .update(target_index=77)),
         eio.ValidationError, eio.load_dataset),
        ("duplicate", mutate(base, lambda d: d["observations"][0]["points"][1]
                             .update(target_index=d["observations"][0]["points"][0]
                                     ["target_index"])),
         eio.ValidationError, eio.load_dataset),
        ("nan pixel", mutate(base, lambda d: d["observations"][0]["points"][0]
                             .update(pixel=[float("nan"), 1.0])),
         eio.ValidationError, eio.load_dataset),
        ("svp nonzero ep", mutate(model_doc, lambda d: d.update(kind="SVP")),
         eio.ValidationError, eio.load_model),
        ("negative focal", mutate(model_doc, lambda d: d["intrinsics"]
                                  .update(fx=-2.0)),
         eio.ValidationError, eio.load_model),
    ]
    assert len(malformed) == 10
    for name, content, expected, loader in malformed:
        path = tmp_path / "bad.json"
        path.write_text(content)
        with pytest.raises(expected):
            loader(path)
    record(8, "round trips value-exact; 10 malformed files -> typed errors")
