"""Rigidity-regularized editing via approximately-Killing displacement fields.

The displacement of a boundary point splits into a normal part driven by
the parameter update (through the sensitivity basis) and a tangential part
supplied by an auxiliary smooth vector net projected onto the tangent
plane.  The Killing energy integrates the symmetrized Jacobian of the
*unprojected* combination

    J(dx) = J(dx_n) + J(f_t),      J(dx_n) = J(b^T) dtheta,

a 3x3xP tensor contraction; keeping the raw J(f_t) (instead of the
jacobian of the projected field) is the simplification the formulation
rests on.  Both energy terms are minimized jointly over (dtheta, Xi) with
adaptive-moment gradient descent; the dtheta subproblem is quadratic, so an
exact per-step solve is available behind a flag.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, OptimizationFailure, ShapeMismatch
from .fields import EPS_GRAD, ImplicitField, normals
from .geometry import SampleSet, area_weights, sample_surface
from .mlp import SineMlp
from .optim import Adam
from .regions import Region
from .sensitivity import basis_rows

Array = np.ndarray


class TangentialField:
    """Smooth vector net R^3 -> R^3 whose projection supplies tangential motion."""

    kind = "tangential"

    def __init__(self, widths=(3, 64, 64, 3), omega0: float = 1.0,
                 params: Array | None = None, seed: int | None = 0,
                 zero_init: bool = True):
        if widths[0] != 3 or widths[-1] != 3:
            raise ShapeMismatch("tangential field must map R^3 -> R^3")
        # zero output layer: the initial displacement field is exactly zero
        self.net = SineMlp(widths, omega0=omega0, params=params, seed=seed,
                           out_scale=0.0 if zero_init and params is None else 1.0)

    @property
    def params(self) -> Array:
        return self.net.params

    def with_params(self, params: Array) -> "TangentialField":
        return TangentialField(self.net.widths, omega0=self.net.omega0, params=params)

    def value(self, X: Array) -> Array:
        return self.net.value(np.atleast_2d(X))

    def jac(self, X: Array) -> Array:
        return self.net.query(np.atleast_2d(X), jac_x=True)["jac_x"]

    def param_backward(self, X, value_bar=None, jac_bar=None) -> Array:
        return self.net.param_backward(X, value_bar=value_bar, jac_bar=jac_bar)

    def describe(self):
        return self.net.describe()


class LinearDisplacement:
    """x -> A x + t; covers rigid motions (A antisymmetric) and scalings (A = c I)."""

    def __init__(self, A, t=(0.0, 0.0, 0.0)):
        self.A = np.asarray(A, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(t, dtype=np.float64).reshape(3)

    @staticmethod
    def rotation(omega) -> "LinearDisplacement":
        wx, wy, wz = np.asarray(omega, dtype=np.float64)
        return LinearDisplacement([[0, -wz, wy], [wz, 0, -wx], [-wy, wx, 0]])

    def value(self, X):
        return np.atleast_2d(X) @ self.A.T + self.t

    def jac(self, X):
        return np.broadcast_to(self.A, (np.atleast_2d(X).shape[0], 3, 3)).copy()


@dataclass
class RigidConfig:
    target_region: Region = None
    target_displacement: object = None       # (3,) vector or callable(X) -> (N, 3)
    anchor_region: Region = None
    alpha: float = 0.01
    lr: float = 1e-3
    iterations: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    sample_count: int = 1000                 # Killing-energy quadrature points
    target_count: int = 200
    anchor_count: int = 200
    tangential_widths: tuple = (3, 64, 64, 3)
    tangential_omega0: float = 1.0
    closed_form_normal: bool = False         # exact dtheta subproblem per step
    weight_resolution: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidSpec("alpha must be > 0", field="alpha")
        if self.target_region is None or self.target_displacement is None:
            raise InvalidSpec("rigid editing needs a target region and displacement",
                              field="target_region")
        if self.anchor_region is None:
            raise InvalidSpec("rigid editing needs an anchor region", field="anchor_region")

    @staticmethod
    def from_json(doc: dict, alpha: float | None = None) -> "RigidConfig":
        from .regions import region_from_json
        if not isinstance(doc, dict):
            raise InvalidSpec("rigid spec must be a JSON object", field="")
        disp = doc.get("displacement")
        if disp is None:
            raise InvalidSpec("missing 'displacement'", field="displacement")
        kw = {}
        for key in ("lr", "iterations", "sample_count", "target_count",
                    "anchor_count", "closed_form_normal", "seed",
                    "weight_resolution"):
            if key in doc:
                kw[key] = doc[key]
        return RigidConfig(
            target_region=region_from_json(doc.get("target_region")),
            target_displacement=np.asarray(disp, dtype=float),
            anchor_region=region_from_json(doc.get("anchor_region")),
            alpha=float(alpha if alpha is not None else doc.get("alpha", 0.01)),
            **kw)


# ---------------------------------------------------------------------------
# Displacement jacobians
# ---------------------------------------------------------------------------


def tangential_displacement(field: ImplicitField, ft, X: Array) -> Array:
    """(I - n n^T) f_t(x): the tangent-plane part of the auxiliary field."""
    X = np.atleast_2d(X)
    n = normals(field, X)
    v = ft.value(X)
    return v - np.einsum("nd,nd->n", n, v)[:, None] * n


def normal_jacobian_tensor(field: ImplicitField, X: Array,
                           chunk: int = 128) -> Array:
    """J(b^T) at each point: (N, 3, 3, P) with J(dx_n) = J(b^T) dtheta.

    Built from gradient, hessian and mixed blocks of the field by the
    product rule on  dx_n = -grad_x f (grad_theta f . dtheta) / |grad_x f|^2.
    """
    X = np.atleast_2d(X)
    N = X.shape[0]
    P = field.param_count
    out = np.empty((N, 3, 3, P))
    for s in range(0, N, chunk):
        q = field.query(X[s:s + chunk], grad_x=True, grad_theta=True,
                        hess_x=True, mixed=True)
        g, m, H, M = q["grad_x"], q["grad_theta"], q["hess_x"], q["mixed"]
        s2 = np.einsum("nd,nd->n", g, g)
        if np.any(np.sqrt(s2) < EPS_GRAD):
            raise OptimizationFailure("degenerate gradient in jacobian tensor")
        Hg = np.einsum("nab,nb->na", H, g)
        t1 = -H[:, :, :, None] * m[:, None, None, :]
        t2 = -g[:, :, None, None] * M[:, None, :, :]
        t3 = 2.0 * g[:, :, None, None] * Hg[:, None, :, None] * m[:, None, None, :] \
            / s2[:, None, None, None]
        out[s:s + chunk] = (t1 + t2) / s2[:, None, None, None] \
            + t3 / s2[:, None, None, None]
    return out


def displacement_jacobian(field: ImplicitField, ft, dtheta: Array | None,
                          x: Array) -> Array:
    """Spatial jacobian of the combined displacement at one point (3x3)."""
    X = np.asarray(x, dtype=np.float64).reshape(1, 3)
    J = np.zeros((1, 3, 3))
    if dtheta is not None:
        dtheta = np.asarray(dtheta, dtype=np.float64)
        q = field.query(X, grad_x=True, grad_theta=True, hess_x=True, mixed=True)
        g, m, H, M = q["grad_x"], q["grad_theta"], q["hess_x"], q["mixed"]
        s2 = float(np.einsum("nd,nd->n", g, g)[0])
        if np.sqrt(s2) < EPS_GRAD:
            raise OptimizationFailure("degenerate gradient")
        qdot = float(m[0] @ dtheta)                       # grad_theta . dtheta
        qgrad = M[0] @ dtheta                             # (3,), spatial grad of qdot
        Hg = H[0] @ g[0]
        J[0] = -(H[0] * qdot + np.outer(g[0], qgrad)) / s2 \
            + 2.0 * np.outer(g[0], Hg) * qdot / s2 ** 2
    if ft is not None:
        J[0] += ft.jac(X)[0]
    return J[0]


def killing_energy(field: ImplicitField, samples: SampleSet, ft=None,
                   dtheta: Array | None = None, jac_tensor: Array | None = None) -> float:
    """E_K = sum_i w_i |J_i + J_i^T|_F^2 over the sample set."""
    if samples.area_weight is None:
        raise ShapeMismatch("killing energy needs area-weighted samples")
    X = samples.positions
    N = len(samples)
    J = np.zeros((N, 3, 3))
    if dtheta is not None:
        A = jac_tensor if jac_tensor is not None else normal_jacobian_tensor(field, X)
        J += np.einsum("nabp,p->nab", A, np.asarray(dtheta, dtype=np.float64))
    if ft is not None:
        J += ft.jac(X)
    S = J + J.transpose(0, 2, 1)
    return float(np.einsum("n,nab,nab->", samples.area_weight, S, S))


def constraint_energy(field: ImplicitField, samples: SampleSet, goals: Array,
                      ft=None, dtheta: Array | None = None,
                      weights: Array | None = None) -> float:
    """E_C = sum_i u_i |goal_i - dx_i|^2 with dx = normal + projected tangential."""
    X = samples.positions
    n = samples.normals
    dx = np.zeros_like(X)
    if dtheta is not None:
        b = basis_rows(field, X)
        dx += (b @ dtheta)[:, None] * n
    if ft is not None:
        v = ft.value(X)
        dx += v - np.einsum("nd,nd->n", n, v)[:, None] * n
    r = dx - goals
    u = weights if weights is not None else np.full(len(X), 1.0 / len(X))
    return float(np.sum(u * np.einsum("nd,nd->n", r, r)))


# ---------------------------------------------------------------------------
# The joint optimization
# ---------------------------------------------------------------------------


def _target_values(config: RigidConfig, X: Array) -> Array:
    d = config.target_displacement
    if callable(d):
        return np.asarray(d(X), dtype=np.float64).reshape(len(X), 3)
    return np.broadcast_to(np.asarray(d, dtype=np.float64), (len(X), 3)).copy()


def rigid_edit(field: ImplicitField, config: RigidConfig, callback=None):
    """Minimize E_K + alpha E_C jointly over (dtheta, Xi).

    Returns (updated field, tangential net, per-step energy trace, dtheta).
    """
    import scipy.linalg

    P = field.param_count
    ek = sample_surface(field, config.sample_count, seed=[config.seed, 0])
    ek = area_weights(field, ek, resolution=config.weight_resolution)
    w = ek.area_weight

    tgt = sample_surface(field, config.target_count, region=config.target_region,
                         seed=[config.seed, 1])
    anc = sample_surface(field, config.anchor_count, region=config.anchor_region,
                         seed=[config.seed, 2])
    ec = SampleSet.concat([tgt, anc])
    goals = np.concatenate([_target_values(config, tgt.positions),
                            np.zeros((len(anc), 3))])
    u = np.full(len(ec), 1.0 / len(ec))

    # symmetrized jacobian tensor rows: S(dtheta) = SA . dtheta + J_t + J_t^T
    A = normal_jacobian_tensor(field, ek.positions)        # (N, 3, 3, P)
    SA = A + A.transpose(0, 2, 1, 3)
    del A
    b_ec = basis_rows(field, ec.positions)                 # (I, P)
    n_ec = ec.normals

    ft = TangentialField(config.tangential_widths, omega0=config.tangential_omega0,
                         seed=config.seed)
    xi = ft.params.copy()
    dtheta = np.zeros(P)

    chol = None
    if config.closed_form_normal:
        rows = SA.reshape(-1, P) * np.sqrt(np.repeat(w, 9))[:, None]
        K = rows.T @ rows
        del rows
        Bn = b_ec * np.sqrt(config.alpha * u)[:, None]
        K += Bn.T @ Bn
        K[np.diag_indices_from(K)] += 1e-10 * max(np.trace(K) / P, 1e-30)
        chol = scipy.linalg.cho_factor(K, check_finite=False)
        del K

    opt = Adam(P + xi.size, lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    trace = []
    initial_total = None
    for it in range(config.iterations):
        ft_it = ft.with_params(xi)
        Jt_ek = ft_it.jac(ek.positions)
        St = Jt_ek + Jt_ek.transpose(0, 2, 1)

        v_ec = ft_it.value(ec.positions)
        tang = v_ec - np.einsum("nd,nd->n", n_ec, v_ec)[:, None] * n_ec

        if config.closed_form_normal:
            # exact minimizer of the quadratic dtheta subproblem at current Xi
            rhs = -np.einsum("n,nab,nabp->p", w, St, SA)
            rhs += config.alpha * (u * np.einsum("nd,nd->n", goals - tang, n_ec)) @ b_ec
            dtheta = scipy.linalg.cho_solve(chol, rhs, check_finite=False)

        S = np.einsum("nabp,p->nab", SA, dtheta) + St
        ek_energy = float(np.einsum("n,nab,nab->", w, S, S))
        dx = (b_ec @ dtheta)[:, None] * n_ec + tang
        r = dx - goals
        ec_energy = float(np.sum(u * np.einsum("nd,nd->n", r, r)))
        total = ek_energy + config.alpha * ec_energy
        trace.append({"step": it, "killing": ek_energy, "constraint": ec_energy,
                      "total": total})
        if callback is not None and (it % 25 == 0 or it == config.iterations - 1):
            callback(trace[-1])
        if initial_total is None:
            initial_total = max(total, 1e-30)
        if not np.isfinite(total) or total > 1e6 * initial_total:
            raise OptimizationFailure(f"energy diverged at step {it}: {total:.3e}")

        # gradients: upstream 4 w S on J at ek points, alpha-weighted residual at ec
        G_ek = 4.0 * w[:, None, None] * S
        v_bar = 2.0 * config.alpha * u[:, None] * (
            r - np.einsum("nd,nd->n", n_ec, r)[:, None] * n_ec)
        g_xi = ft_it.param_backward(ek.positions, jac_bar=G_ek) \
            + ft_it.param_backward(ec.positions, value_bar=v_bar)

        if config.closed_form_normal:
            step = opt.step(np.concatenate([np.zeros(P), g_xi]))
            xi = xi + step[P:]
        else:
            # dE_K/ddtheta = sum_n w_n 2 <S_n, SA_n .>  (S symmetric)
            g_theta = 2.0 * np.einsum("n,nab,nabp->p", w, S, SA)
            rn = np.einsum("nd,nd->n", r, n_ec)
            g_theta += 2.0 * config.alpha * (u * rn) @ b_ec
            step = opt.step(np.concatenate([g_theta, g_xi]))
            dtheta = dtheta + step[:P]
            xi = xi + step[P:]

    updated = field.with_params(field.params + dtheta)
    return updated, ft.with_params(xi), trace, dtheta


def trace_to_csv(trace) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["step", "killing", "constraint", "total"])
    for row in trace:
        wr.writerow([row["step"], row["killing"], row["constraint"], row["total"]])
    return buf.getvalue()


def save_tangential(ft: TangentialField, path) -> None:
    """Checkpoint the tangential net in the shared versioned-JSON format."""
    import json
    from .fields import _encode_params
    doc = {"format": "fieldedit/checkpoint", "version": 1, "kind": "tangential",
           "net": ft.describe(), "params": _encode_params(ft.params)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_tangential(path) -> TangentialField:
    import json
    from .fields import _decode_params
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "tangential":
        raise ShapeMismatch("not a tangential-field checkpoint")
    net = doc["net"]
    return TangentialField(tuple(net["widths"]), omega0=net["omega0"],
                           params=_decode_params(doc["params"]))
