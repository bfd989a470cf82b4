"""End-to-end acceptance suite.

One test per criterion, each printing a single pass line (run with -s to
watch them).  Fitted fixtures come from conftest's disk cache; everything
else runs live at the stated scales.
"""

import json
import struct
import time

import numpy as np
import pytest

from fieldedit.editing import EditSpec, TargetSpec, edit, solve_update
from fieldedit.fields import (Ellipsoid, Sphere, SirenField, evaluate,
                              checkpoint_dict)
from fieldedit.flows import FlowConfig, run_smoothing
from fieldedit.geometry import (area_weights, estimate_volume,
                                measure_normal_motion, sample_surface)
from fieldedit.regions import Everywhere, HalfSpaceRegion
from fieldedit.rigid import (LinearDisplacement, RigidConfig, TangentialField,
                             constraint_energy, displacement_jacobian,
                             killing_energy, rigid_edit)
from fieldedit.sensitivity import assemble_system
from fieldedit.training import semantic_edit
from oracles import fd_gradient, fd_hessian, fd_mixed, fd_param_gradient, rel_err

from test_sensitivity import halving_ratio


def report(n, text):
    print(f"\n[criterion {n:2d}] PASS  {text}")


# -- 1. derivative exactness -------------------------------------------------

def test_criterion_1_derivative_exactness():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    draws = 0
    cases = [
        SirenField(seed=1),
        Ellipsoid((0.9, 0.7, 0.5)),
    ]
    while draws < 100:
        field = cases[draws % 2]
        if field.param_count > 3:
            field = field.with_params(
                field.params + 0.02 * rng.standard_normal(field.param_count))
        else:
            field = field.with_params(rng.uniform(0.5, 1.0, field.param_count))
        x = rng.uniform(-0.9, 0.9, 3)
        if np.linalg.norm(x) < 0.35:
            continue
        draws += 1
        q = evaluate(field, x, grad_x=True, grad_theta=True,
                     hessian_x=True, mixed=True)
        vf = lambda p: field.value(p[None])[0]
        idx = rng.choice(field.param_count, min(8, field.param_count),
                         replace=False)
        errs = [
            rel_err(q.grad_x, fd_gradient(vf, x)),
            rel_err(q.hessian_x, fd_hessian(vf, x)),
            rel_err(q.grad_theta[idx], fd_param_gradient(field, x, idx)),
            rel_err(q.mixed[:, idx], fd_mixed(field, x, idx)),
        ]
        worst = max(worst, max(errs))
    elapsed = time.time() - t0
    assert worst < 1e-5, f"worst relative error {worst:.2e}"
    assert elapsed < 10, f"took {elapsed:.1f}s"
    report(1, f"five derivative blocks vs central differences: worst "
              f"{worst:.1e} over 100 draws in {elapsed:.1f}s")


# -- 2. first-order boundary law ----------------------------------------------

def test_criterion_2_first_order_boundary_law(sphere_mlp):
    t0 = time.time()
    ratios = halving_ratio(sphere_mlp, n_trials=10, n_samples=200, seed=1)
    elapsed = time.time() - t0
    assert np.all(ratios > 3.0) and np.all(ratios < 5.0), ratios
    assert elapsed < 60
    report(2, f"halving-ratio in [3,5] for all 10 directions "
              f"(range {ratios.min():.2f}..{ratios.max():.2f}, {elapsed:.0f}s)")


# -- 3. sphere-inflate closed form ---------------------------------------------

def test_criterion_3_sphere_inflate_closed_form():
    field = Sphere(1.0)
    samples = sample_surface(field, 100, seed=0)
    B = assemble_system(field, samples).matrix
    dr = solve_update(B, np.full(100, 0.1), 0.1)[0]
    expected = 100 * 0.1 / (100 + 0.1)
    assert abs(dr - expected) <= 1e-6
    report(3, f"dr = {dr:.6f} (closed form {expected:.6f}, lambda = 0.1)")


# -- 4. splitting trend ---------------------------------------------------------

def test_criterion_4_splitting_trend(small_sphere_mlp):
    t0 = time.time()
    probe = sample_surface(small_sphere_mlp, 300, seed=55)
    t_max = 0.9
    devs = []
    for splits in (1, 2, 4, 8, 16):
        spec = EditSpec(targets=[TargetSpec(Everywhere(), 0.5, "normal")],
                        target_count=300, splits=splits, lam=0.1, seed=3)
        out, _ = edit(small_sphere_mlp, spec)
        t = measure_normal_motion(out, probe.positions, probe.normals,
                                  t_max=t_max)
        dev = np.where(np.isnan(t), t_max - 0.5, np.abs(t - 0.5))
        devs.append(float(dev.mean()))
    elapsed = time.time() - t0
    assert all(devs[i + 1] <= devs[i] for i in range(4)), devs
    assert devs[-1] <= 0.25 * devs[0], devs
    assert elapsed < 600
    report(4, "deviation by splits {1,2,4,8,16}: "
              + ", ".join(f"{d:.4f}" for d in devs) + f" ({elapsed:.0f}s)")


# -- 5. lambda sweep ------------------------------------------------------------

def test_criterion_5_lambda_sweep(sphere_mlp):
    t0 = time.time()
    lams = [1e-3, 1e-1, 1e1]

    # single-solve monotonicity on the live system
    ss = sample_surface(sphere_mlp, 200, seed=0)
    B = assemble_system(sphere_mlp, ss).matrix
    dy = np.full(200, 0.1)
    norms, resids = [], []
    for lam in lams:
        d = solve_update(B, dy, lam)
        norms.append(np.linalg.norm(d))
        resids.append(np.linalg.norm(B @ d - dy))
    assert norms[0] >= norms[1] >= norms[2]
    assert resids[0] <= resids[1] <= resids[2]

    # iterations to a fixed measured deviation, pursue mode
    def radial(X):
        return 0.15 * X / np.linalg.norm(X, axis=1, keepdims=True)

    iters = []
    for lam in lams:
        spec = EditSpec(targets=[TargetSpec(Everywhere(), radial)],
                        target_count=400, splits=1500, mode="pursue", lam=lam,
                        remaining_tol=5.6e-4, seed=0, normal_filter=None)
        out, rep = edit(sphere_mlp, spec)
        assert rep.converged, f"lambda={lam} did not reach the target deviation"
        iters.append(rep.iterations)
    elapsed = time.time() - t0
    assert iters[0] < iters[1] < iters[2], iters
    assert elapsed < 600
    report(5, f"norms {[f'{x:.3f}' for x in norms]} non-increasing, residuals "
              f"non-decreasing; iterations {iters} strictly increasing "
              f"({elapsed:.0f}s)")


# -- 6/7. volume-preserving smoothing + constraint exactness --------------------

@pytest.fixture(scope="module")
def smoothing_runs(blobby_mlp):
    v0 = estimate_volume(blobby_mlp, 128)
    runs = {}
    for preserve in (False, True):
        cfg = FlowConfig(tau=6.5e-4, iterations=86, sample_count=1200,
                         volume_resolution=48, seed=0,
                         volume_preserving=preserve)
        out, trace = run_smoothing(blobby_mlp, cfg)
        runs[preserve] = (out, trace)
    return v0, runs


def test_criterion_6_volume_preserving_smoothing(smoothing_runs):
    t0 = time.time()
    v0, runs = smoothing_runs
    loss_free = (v0 - estimate_volume(runs[False][0], 128)) / v0
    loss_cons = (v0 - estimate_volume(runs[True][0], 128)) / v0
    assert loss_free > 0.50, loss_free
    assert loss_cons < 0.05, loss_cons
    report(6, f"86 iterations: volume loss {loss_free:.1%} unconstrained, "
              f"{loss_cons:.2%} constrained (128^3 oracle)")


def test_criterion_7_constraint_exactness(smoothing_runs):
    _, runs = smoothing_runs
    worst = 0.0
    for row in runs[True][1][1:]:
        denom = max(row["basis_norm"] * row["update_norm"], 1e-300)
        worst = max(worst, abs(row["volume_drift"]) / denom)
    assert worst <= 1e-10, worst
    report(7, f"per-iteration |b_H . dtheta'| <= {worst:.1e} relative "
              f"over all 86 iterations")


# -- 8. killing invariants -------------------------------------------------------

def test_criterion_8_killing_invariants(sphere_mlp):
    t0 = time.time()
    sph = Sphere(1.0)
    samples = area_weights(sph, sample_surface(sph, 300, seed=0))
    rot = LinearDisplacement.rotation([0.0, 0.0, 0.3])
    ek_rot = killing_energy(sph, samples, ft=rot)
    assert ek_rot < 1e-8

    scale = LinearDisplacement(np.eye(3))
    density = killing_energy(sph, samples, ft=scale) / samples.area_weight.sum()
    assert abs(density - 12.0) <= 1e-9

    rng = np.random.default_rng(4)
    dtheta = 1e-3 * rng.standard_normal(sphere_mlp.param_count)
    ft = TangentialField((3, 16, 16, 3), seed=1, zero_init=False)

    def disp(X):
        q = sphere_mlp.query(X, grad_x=True, grad_theta=True)
        g, m = q["grad_x"], q["grad_theta"]
        s2 = np.einsum("nd,nd->n", g, g)
        return -(g * (m @ dtheta)[:, None]) / s2[:, None] + ft.value(X)

    h = 1e-5
    worst = 0.0
    for x in sample_surface(sphere_mlp, 5, seed=9).positions:
        J = displacement_jacobian(sphere_mlp, ft, dtheta, x)
        fd = np.zeros((3, 3))
        for b in range(3):
            e = np.zeros(3)
            e[b] = h
            fd[:, b] = (disp((x + e)[None])[0] - disp((x - e)[None])[0]) / (2 * h)
        worst = max(worst, np.abs(J - fd).max() / np.abs(J).max())
    assert worst <= 1e-5
    elapsed = time.time() - t0
    assert elapsed < 60
    report(8, f"rotation E_K {ek_rot:.1e}; scaling density 12 +- "
              f"{abs(density - 12):.1e}; jacobian FD err {worst:.1e} ({elapsed:.0f}s)")


# -- 9. rigid editing beats plain editing on rigidity ----------------------------

def test_criterion_9_rigid_editing_rigidity(capsule_mlp):
    t0 = time.time()
    pivot = np.array([0.0, 0.0, -0.8])
    theta = 0.06

    def twist(X):
        arm = X - pivot
        return theta * np.stack(
            [np.zeros(len(X)), -arm[:, 2], arm[:, 1]], axis=1)

    top = HalfSpaceRegion((0, 0, 1), 0.55)
    bottom = HalfSpaceRegion((0, 0, -1), 0.55)

    # plain editing: prescribed region plus anchored rest, one linear solve
    spec = EditSpec(targets=[TargetSpec(top, twist)], fixed_region=bottom,
                    target_count=150, fixed_count=150, splits=1, lam=0.1,
                    seed=0)
    edited, _ = edit(capsule_mlp, spec)
    dtheta_edit = edited.params - capsule_mlp.params

    config = RigidConfig(
        target_region=top, target_displacement=twist, anchor_region=bottom,
        alpha=0.03, iterations=500, sample_count=600, target_count=150,
        anchor_count=150, closed_form_normal=True, lr=2e-3, seed=0)
    rigid_out, ft, trace, dtheta_rigid = rigid_edit(capsule_mlp, config)

    ek_samples = area_weights(capsule_mlp,
                              sample_surface(capsule_mlp, 600, seed=31))
    tgt = sample_surface(capsule_mlp, 150, region=top, seed=32)
    anc = sample_surface(capsule_mlp, 150, region=bottom, seed=33)
    from fieldedit.geometry import SampleSet
    ec_samples = SampleSet.concat([tgt, anc])
    goals = np.concatenate([twist(tgt.positions), np.zeros((150, 3))])

    ek_edit = killing_energy(capsule_mlp, ek_samples, dtheta=dtheta_edit)
    ec_edit = constraint_energy(capsule_mlp, ec_samples, goals,
                                dtheta=dtheta_edit)
    ek_rigid = killing_energy(capsule_mlp, ek_samples, ft=ft,
                              dtheta=dtheta_rigid)
    ec_rigid = constraint_energy(capsule_mlp, ec_samples, goals, ft=ft,
                                 dtheta=dtheta_rigid)
    elapsed = time.time() - t0
    assert ec_rigid <= ec_edit * 1.05, (ec_rigid, ec_edit)
    assert ek_rigid <= 0.2 * ek_edit, (ek_rigid, ek_edit)
    assert elapsed < 1800
    report(9, f"E_K {ek_rigid:.3e} vs editing {ek_edit:.3e} "
              f"({ek_rigid / ek_edit:.1%}) at E_C {ec_rigid:.2e} <= "
              f"{ec_edit:.2e} ({elapsed:.0f}s)")


# -- 10. semantic pipeline -------------------------------------------------------

def test_criterion_10_semantic_pipeline(autodec, box_family):
    t0 = time.time()
    from fieldedit.training import reconstruction_residual
    from fieldedit.regions import BoxRegion

    worst = max(reconstruction_residual(autodec, box_family, k)
                for k in range(len(box_family)))
    assert worst < 5e-3, worst

    k = 0
    field = autodec.field_for(k)
    hx = box_family.parameters[k][0]
    face = BoxRegion((hx - 0.06, -1.25, -1.25), (1.25, 1.25, 1.25))
    mag = 0.12
    spec = EditSpec(targets=[TargetSpec(face, np.array([-mag, 0, 0]))],
                    target_count=100, splits=15, mode="pursue", lam=0.1,
                    remaining_tol=0.1 * mag, seed=0)
    out, rep = semantic_edit(field, spec)
    assert rep.converged and rep.iterations <= 15, rep.iterations
    rem = [r for r in rep.remaining if r is not None]
    assert all(rem[i + 1] < rem[i] for i in range(1, len(rem) - 1)), rem

    # semantically inviable: translate both x faces the same way
    lo_face = BoxRegion((-1.25, -1.25, -1.25), (-(hx - 0.06), 1.25, 1.25))
    bad = EditSpec(targets=[TargetSpec(face, np.array([mag, 0, 0])),
                            TargetSpec(lo_face, np.array([mag, 0, 0]))],
                   target_count=50, splits=15, mode="pursue", lam=0.1, seed=1)
    _, bad_rep = semantic_edit(field, bad)
    bad_rem = [r for r in bad_rep.remaining if r is not None]
    assert bad_rem[-1] > 0.5 * mag, bad_rem
    elapsed = time.time() - t0
    report(10, f"50/50 shapes under 5e-3 (worst {worst:.1e}); edit converged "
               f"in {rep.iterations} iterations; inviable target keeps "
               f"{bad_rem[-1] / mag:.0%} deviation ({elapsed:.0f}s)")


# -- 11. end-to-end service fixture ----------------------------------------------

def test_criterion_11_service_end_to_end():
    t0 = time.time()
    from fastapi.testclient import TestClient
    from fieldedit.fields import load_checkpoint
    from fieldedit.service import create_app
    from pathlib import Path

    ckpt = Path(__file__).resolve().parents[1] / "checkpoints" / "sphere.json"
    field = load_checkpoint(ckpt)
    client = TestClient(create_app())
    sid = client.post("/sessions",
                      json={"checkpoint": checkpoint_dict(field)}).json()["session"]

    def mesh_bytes():
        r = client.get(f"/sessions/{sid}/mesh", params={"res": 48})
        assert r.status_code == 200
        return r.content

    def mean_radius(raw):
        nv = struct.unpack_from("<I", raw, 12)[0]
        verts = np.frombuffer(raw, dtype="<f4", count=nv * 3, offset=20)
        return float(np.linalg.norm(verts.reshape(-1, 3), axis=1).mean())

    before = mesh_bytes()
    r0 = mean_radius(before)
    spec = {"targets": [{"region": {"type": "everywhere"},
                         "displacement": {"kind": "normal", "value": 0.1}}],
            "samples": {"target": 200}, "splits": 2, "lambda": 0.1, "seed": 0}
    with client.stream("POST", f"/sessions/{sid}/edit", json=spec) as resp:
        events = [json.loads(l) for l in resp.iter_lines() if l]
    assert events[-1]["event"] == "done"
    r1 = mean_radius(mesh_bytes())
    assert abs((r1 - r0) - 0.1) <= 0.01, (r0, r1)

    assert client.post(f"/sessions/{sid}/undo").json()["undone"]
    assert mesh_bytes() == before
    elapsed = time.time() - t0
    assert elapsed < 120
    report(11, f"inflate moved mean radius {r0:.4f} -> {r1:.4f} "
               f"(target +0.100); undo restored byte-identical mesh "
               f"({elapsed:.0f}s)")
