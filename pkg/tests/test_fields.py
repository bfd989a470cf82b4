"""Field-core contracts: derivative exactness, conventions, serialization."""

import numpy as np
import pytest

from fieldedit.errors import DomainViolation, ShapeMismatch, SingularGradient
from fieldedit.fields import (Domain, Ellipsoid, LatentField, RoundedBox,
                              Scaled, SirenField, Sphere, Torus, Union,
                              checkpoint_dict, evaluate, field_from_dict,
                              flatten_params, load_checkpoint, mean_curvature,
                              normal, normals, save_checkpoint,
                              unflatten_params)
from fieldedit.mlp import SineMlp

from oracles import fd_gradient, fd_hessian, fd_mixed, fd_param_gradient, rel_err

RNG = np.random.default_rng(42)


def random_fields():
    return [
        ("sphere", Sphere(0.8)),
        ("ellipsoid", Ellipsoid((0.9, 0.7, 0.5))),
        ("torus", Torus(0.6, 0.25)),
        ("siren", SirenField((3, 16, 16, 1), omega0=6.0, seed=3)),
    ]


def test_unit_sphere_values():
    q = evaluate(Sphere(1.0), [1, 0, 0], grad_x=True, grad_theta=True)
    assert q.value == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(q.grad_x, [1, 0, 0])
    assert np.allclose(q.grad_theta, [-1.0])
    q2 = evaluate(Sphere(1.0), [0, 0, 1.2], grad_x=True)
    assert q2.value == pytest.approx(0.2)
    assert np.allclose(q2.grad_x, [0, 0, 1])


def test_evaluate_outside_domain_raises():
    with pytest.raises(DomainViolation):
        evaluate(Sphere(1.0), [2.0, 0, 0])


@pytest.mark.parametrize("name,field", random_fields())
def test_all_blocks_match_finite_differences(name, field):
    rng = np.random.default_rng(7)
    for _ in range(8):
        x = rng.uniform(-0.9, 0.9, 3)
        if np.linalg.norm(x) < 0.3:
            continue
        f = field
        if f.param_count > 1:
            f = f.with_params(f.params + 0.01 * rng.standard_normal(f.param_count))
        q = evaluate(f, x, grad_x=True, grad_theta=True, hessian_x=True, mixed=True)
        vf = lambda p: f.value(p[None])[0]
        assert rel_err(q.grad_x, fd_gradient(vf, x)) < 1e-5
        assert rel_err(q.hessian_x, fd_hessian(vf, x)) < 1e-5
        idx = rng.choice(f.param_count, min(12, f.param_count), replace=False)
        assert rel_err(q.grad_theta[idx], fd_param_gradient(f, x, idx)) < 1e-5
        assert rel_err(q.mixed[:, idx], fd_mixed(f, x, idx)) < 2e-5


def test_hessian_symmetry_and_mixed_partials():
    field = SirenField((3, 16, 16, 1), omega0=8.0, seed=1)
    X = RNG.uniform(-1, 1, (32, 3))
    q = field.query(X, hess_x=True, mixed=True, grad_theta=True, grad_x=True)
    H = q["hess_x"]
    assert np.abs(H - H.transpose(0, 2, 1)).max() < 1e-10 * max(1, np.abs(H).max())
    # equality of mixed partials: d(grad_x)/dtheta == d(grad_theta)/dx, via FD of both
    x = X[0]
    h = 1e-5
    p = 7
    e = np.zeros(field.param_count)
    e[p] = h
    dgrad = (field.with_params(field.params + e).grad_x(x[None])[0]
             - field.with_params(field.params - e).grad_x(x[None])[0]) / (2 * h)
    assert rel_err(dgrad, q["mixed"][0, :, p]) < 1e-6


def test_evaluation_pure():
    field = SirenField((3, 16, 16, 1), seed=0)
    X = RNG.uniform(-1, 1, (10, 3))
    a = field.query(X, grad_x=True, hess_x=True)
    b = field.query(X, grad_x=True, hess_x=True)
    assert np.array_equal(a["value"], b["value"])
    assert np.array_equal(a["grad_x"], b["grad_x"])
    assert np.array_equal(a["hess_x"], b["hess_x"])


def test_normal_conventions():
    assert np.allclose(normal(Sphere(1.0), [0, 1, 0]), [0, 1, 0])
    assert np.allclose(normal(Sphere(1.0), [0, 0, -1]), [0, 0, -1])
    n = normals(Sphere(1.0), RNG.uniform(-0.5, 0.5, (50, 3)) + [0.6, 0, 0])
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)


def test_normal_singular_gradient():
    with pytest.raises(SingularGradient):
        normal(Sphere(1.0, center=(0, 0, 0)), [0, 0, 0])


def test_mean_curvature_spheres():
    assert mean_curvature(Sphere(1.0), [0, 0, 1]) == pytest.approx(2.0, abs=1e-12)
    big = Sphere(2.0, domain=Domain((-2.5,) * 3, (2.5,) * 3))
    assert mean_curvature(big, [0, 0, 2.0]) == pytest.approx(1.0, abs=1e-12)


def test_mlp_curvature_against_torus(torus_mlp):
    from fieldedit.geometry import sample_surface
    from fieldedit.fields import mean_curvatures
    tor = Torus(0.6, 0.25)
    ss = sample_surface(tor, 1000, seed=1)
    exact = mean_curvatures(tor, ss.positions)
    from fieldedit.geometry import project_points
    pts, ok = project_points(torus_mlp, ss.positions)
    fitted = mean_curvatures(torus_mlp, pts[ok])
    med = np.median(np.abs(fitted - exact[ok]) / np.abs(exact[ok]))
    assert med < 0.05


def test_flatten_roundtrip():
    field = SirenField((3, 16, 16, 1), seed=5)
    theta = flatten_params(field)
    clone = unflatten_params(field, theta)
    X = RNG.uniform(-1, 1, (100, 3))
    assert np.array_equal(field.value(X), clone.value(X))
    with pytest.raises(ShapeMismatch):
        unflatten_params(field, theta[:-1])


def test_flatten_entry_maps_to_grad_theta():
    field = SirenField((3, 8, 8, 1), omega0=4.0, seed=2)
    x = np.array([0.3, -0.2, 0.5])
    p = 11
    h = 1e-6
    theta = flatten_params(field)
    e = np.zeros_like(theta)
    e[p] = h
    fd = (unflatten_params(field, theta + e).value(x[None])[0]
          - unflatten_params(field, theta - e).value(x[None])[0]) / (2 * h)
    q = evaluate(field, x, grad_theta=True)
    assert fd == pytest.approx(q.grad_theta[p], rel=1e-6, abs=1e-10)


def test_default_architecture_param_count():
    assert SirenField().param_count == 2273
    assert SineMlp((3, 32, 32, 32, 1)).param_count == 2273


def test_scaled_wrapper_keeps_basis():
    from fieldedit.sensitivity import basis_rows
    base = Ellipsoid((0.9, 0.7, 0.5))
    X = RNG.uniform(-0.6, 0.6, (20, 3)) + [0.4, 0, 0]
    b1 = basis_rows(base, X)
    b2 = basis_rows(Scaled(base, 3.7), X)
    assert np.abs(b1 - b2).max() < 1e-12


def test_union_picks_closest_child():
    u = Union([Sphere(0.5, (0.4, 0, 0)), Sphere(0.5, (-0.4, 0, 0))])
    q = evaluate(u, [0.9, 0, 0], grad_x=True, grad_theta=True)
    assert q.value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(q.grad_theta, [-1.0, 0.0])


def test_latent_field_masks():
    dec = SineMlp((3 + 4, 12, 12, 1), omega0=4.0, seed=6)
    lat = RNG.normal(size=4) * 0.2
    full = LatentField(dec, lat, latent_only=False)
    latonly = LatentField(dec, lat, latent_only=True)
    X = RNG.uniform(-0.8, 0.8, (6, 3))
    qf = full.query(X, grad_theta=True, mixed=True)
    ql = latonly.query(X, grad_theta=True, mixed=True)
    m = latonly.latent_mask
    assert np.array_equal(qf["grad_theta"][:, m], ql["grad_theta"][:, m])
    assert np.abs(ql["grad_theta"][:, :m[0]]).max() == 0.0
    assert np.array_equal(qf["mixed"][:, :, m], ql["mixed"][:, :, m])
    # latent gradient agrees with finite differences
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd = (full.with_latent(lat + e).value(X) - full.with_latent(lat - e).value(X)) / (2 * h)
        assert rel_err(fd, qf["grad_theta"][:, m[j]]) < 1e-6


def test_checkpoint_bit_exact_roundtrip(tmp_path):
    for field in (SirenField((3, 16, 16, 1), seed=9),
                  Sphere(0.77),
                  Union([Sphere(0.4, (0.2, 0, 0)), RoundedBox((0.3, 0.3, 0.3), 0.05)])):
        path = tmp_path / "ckpt.json"
        save_checkpoint(field, path)
        back = load_checkpoint(path)
        assert np.array_equal(back.params, field.params)
        assert back.domain == field.domain
        X = RNG.uniform(-1, 1, (50, 3))
        assert np.array_equal(back.value(X), field.value(X))


def test_checkpoint_latent_roundtrip(tmp_path):
    dec = SineMlp((3 + 3, 10, 10, 1), omega0=3.0, seed=4)
    field = LatentField(dec, np.array([0.1, -0.2, 0.3]))
    path = tmp_path / "lat.json"
    save_checkpoint(field, path)
    back = load_checkpoint(path)
    assert isinstance(back, LatentField)
    assert np.array_equal(back.params, field.params)
    assert back.latent_only == field.latent_only


def test_checkpoint_rejects_garbage():
    with pytest.raises(ShapeMismatch):
        field_from_dict({"format": "something-else"})
    doc = checkpoint_dict(Sphere(1.0))
    doc["version"] = 99
    with pytest.raises(ShapeMismatch):
        field_from_dict(doc)
