"""Implicit scalar fields and their derivative queries.

A field f(x; theta) defines a shape as the region f <= 0 and its boundary
as the zero level set.  Every field exposes the same batched query
interface returning any subset of

    value        (N,)
    grad_x       (N, 3)        spatial gradient
    grad_theta   (N, P)        parameter gradient
    hess_x       (N, 3, 3)     spatial hessian
    mixed        (N, 3, P)     d^2 f / dx dtheta

which is exactly the derivative data the sensitivity basis, curvature and
rigidity machinery consume.  Fields are immutable; ``with_params`` returns
an updated snapshot so concurrent readers never observe partial updates.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .errors import (DomainViolation, NumericFailure, ShapeMismatch,
                     SingularGradient)
from .mlp import SineMlp

Array = np.ndarray

EPS_GRAD = 1e-8   # below this gradient norm, normals and basis rows are meaningless


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box of interest; all shapes live strictly inside it."""

    lower: tuple = (-1.25, -1.25, -1.25)
    upper: tuple = (1.25, 1.25, 1.25)

    def __post_init__(self):
        lo, up = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (3,) or up.shape != (3,) or not np.all(lo < up):
            raise ShapeMismatch("domain needs lower < upper componentwise, 3 components")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(up))

    @property
    def lo(self) -> Array:
        return np.asarray(self.lower)

    @property
    def up(self) -> Array:
        return np.asarray(self.upper)

    def contains(self, X: Array) -> Array:
        X = np.atleast_2d(X)
        return np.all((X >= self.lo - 1e-12) & (X <= self.up + 1e-12), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> Array:
        return rng.uniform(self.lo, self.up, size=(n, 3))

    def volume(self) -> float:
        return float(np.prod(self.up - self.lo))

    def to_json(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @staticmethod
    def from_json(d: dict) -> "Domain":
        return Domain(tuple(d["lower"]), tuple(d["upper"]))


@dataclass
class FieldQuery:
    """Derivative blocks at a single point; requested blocks are populated."""

    value: float
    grad_x: Array | None = None
    grad_theta: Array | None = None
    hessian_x: Array | None = None
    mixed: Array | None = None


class ImplicitField:
    """Common behaviour; concrete fields implement ``_query``."""

    domain: Domain = Domain()
    kind = "abstract"

    @property
    def params(self) -> Array:
        raise NotImplementedError

    @property
    def param_count(self) -> int:
        return self.params.shape[0]

    def with_params(self, theta: Array) -> "ImplicitField":
        raise NotImplementedError

    def _query(self, X: Array, need: frozenset) -> dict:
        raise NotImplementedError

    # -- batched public API ---------------------------------------------------

    def query(self, X: Array, grad_x: bool = False, grad_theta: bool = False,
              hess_x: bool = False, mixed: bool = False) -> dict:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != 3:
            raise ShapeMismatch(f"points must be (N, 3), got {X.shape}")
        need = {"value"}
        if grad_x:
            need.add("grad_x")
        if grad_theta:
            need.add("grad_theta")
        if hess_x:
            need.add("hess_x")
        if mixed:
            need.add("mixed")
        out = self._query(X, frozenset(need))
        return {k: out[k] for k in need}

    def value(self, X: Array) -> Array:
        return self.query(X)["value"]

    def grad_x(self, X: Array) -> Array:
        return self.query(X, grad_x=True)["grad_x"]


def evaluate(field: ImplicitField, x: Array, grad_x: bool = False,
             grad_theta: bool = False, hessian_x: bool = False,
             mixed: bool = False) -> FieldQuery:
    """Single-point evaluation with domain and finiteness checks."""
    x = np.asarray(x, dtype=np.float64).reshape(3)
    if not field.domain.contains(x[None, :])[0]:
        raise DomainViolation(f"point {x.tolist()} outside domain")
    q = field.query(x[None, :], grad_x=grad_x, grad_theta=grad_theta,
                    hess_x=hessian_x, mixed=mixed)
    for k, v in q.items():
        if not np.all(np.isfinite(v)):
            raise NumericFailure(f"non-finite {k} at {x.tolist()}")
    return FieldQuery(
        value=float(q["value"][0]),
        grad_x=q["grad_x"][0] if grad_x else None,
        grad_theta=q["grad_theta"][0] if grad_theta else None,
        hessian_x=q["hess_x"][0] if hessian_x else None,
        mixed=q["mixed"][0] if mixed else None,
    )


def normals(field: ImplicitField, X: Array) -> Array:
    """Outward unit normals grad f / |grad f| at a batch of points."""
    g = field.query(X, grad_x=True)["grad_x"]
    n = np.linalg.norm(g, axis=1)
    if np.any(n < EPS_GRAD):
        i = int(np.argmin(n))
        raise SingularGradient(f"degenerate gradient (|g|={n[i]:.3e}) at sample {i}")
    return g / n[:, None]


def normal(field: ImplicitField, x: Array) -> Array:
    return normals(field, np.asarray(x, float).reshape(1, 3))[0]


def mean_curvatures(field: ImplicitField, X: Array) -> Array:
    """div(n) from gradient and hessian blocks; unit sphere gives +2."""
    q = field.query(X, grad_x=True, hess_x=True)
    g, H = q["grad_x"], q["hess_x"]
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn < EPS_GRAD):
        raise SingularGradient("degenerate gradient in curvature evaluation")
    lap = np.trace(H, axis1=1, axis2=2)
    quad = np.einsum("na,nab,nb->n", g, H, g)
    return (lap * gn ** 2 - quad) / gn ** 3


def mean_curvature(field: ImplicitField, x: Array) -> float:
    return float(mean_curvatures(field, np.asarray(x, float).reshape(1, 3))[0])


def flatten_params(field: ImplicitField) -> Array:
    return field.params.copy()


def unflatten_params(field: ImplicitField, theta: Array) -> ImplicitField:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (field.param_count,):
        raise ShapeMismatch(
            f"expected parameter vector of length {field.param_count}, got {theta.shape}")
    return field.with_params(theta)


# ---------------------------------------------------------------------------
# Analytic fields (closed-form derivative blocks; test oracles and CLI targets)
# ---------------------------------------------------------------------------


class AnalyticField(ImplicitField):
    """Base for closed-form fields; children fill the blocks they support."""

    kind = "analytic"
    shape_kind = "abstract"

    def __init__(self, params, domain: Domain | None = None):
        self._params = np.ascontiguousarray(params, dtype=np.float64)
        self._params.flags.writeable = False
        if domain is not None:
            self.domain = domain

    @property
    def params(self) -> Array:
        return self._params

    def with_params(self, theta: Array) -> "AnalyticField":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self._params.shape:
            raise ShapeMismatch("parameter count mismatch")
        clone = self.__class__.__new__(self.__class__)
        clone.__dict__.update(self.__dict__)
        AnalyticField.__init__(clone, theta, domain=self.domain)
        return clone

    def describe(self) -> dict:
        raise NotImplementedError


class Sphere(AnalyticField):
    """Exact SDF |x - c| - r with the radius as the single parameter."""

    shape_kind = "sphere"

    def __init__(self, radius: float = 1.0, center=(0.0, 0.0, 0.0),
                 domain: Domain | None = None):
        self.center = np.asarray(center, dtype=np.float64)
        super().__init__([radius], domain)

    @property
    def radius(self) -> float:
        return float(self._params[0])

    def _query(self, X, need):
        d = X - self.center
        rho = np.linalg.norm(d, axis=1)
        rho_safe = np.maximum(rho, 1e-300)
        out = {"value": rho - self.radius}
        unit = d / rho_safe[:, None]
        if "grad_x" in need:
            out["grad_x"] = unit
        if "hess_x" in need:
            eye = np.eye(3)[None]
            out["hess_x"] = (eye - unit[:, :, None] * unit[:, None, :]) / rho_safe[:, None, None]
        if "grad_theta" in need:
            out["grad_theta"] = np.full((X.shape[0], 1), -1.0)
        if "mixed" in need:
            out["mixed"] = np.zeros((X.shape[0], 3, 1))
        return out

    def describe(self):
        return {"shape": "sphere", "center": self.center.tolist()}


class Ellipsoid(AnalyticField):
    """f = sqrt(sum x_i^2 / a_i^2) - 1 with the three semi-axes as parameters."""

    shape_kind = "ellipsoid"

    def __init__(self, axes=(1.0, 0.8, 0.6), center=(0.0, 0.0, 0.0),
                 domain: Domain | None = None):
        self.center = np.asarray(center, dtype=np.float64)
        super().__init__(list(axes), domain)

    def _query(self, X, need):
        a = self._params
        d = X - self.center
        s = d / a[None, :]
        q = np.maximum(np.linalg.norm(s, axis=1), 1e-300)
        out = {"value": q - 1.0}
        g = d / (a ** 2)[None, :] / q[:, None]          # x_i / (a_i^2 q)
        if "grad_x" in need:
            out["grad_x"] = g
        if "hess_x" in need:
            diag = np.zeros((X.shape[0], 3, 3))
            idx = np.arange(3)
            diag[:, idx, idx] = 1.0 / (a ** 2)[None, :] / q[:, None]
            out["hess_x"] = diag - g[:, :, None] * g[:, None, :] / q[:, None, None]
        if "grad_theta" in need:
            out["grad_theta"] = -(d ** 2) / (a ** 3)[None, :] / q[:, None]
        if "mixed" in need:
            # d/d a_i of g_d = x_d/(a_d^2 q)
            dq_da = -(d ** 2) / (a ** 3)[None, :] / q[:, None]      # (N, 3)
            mix = -g[:, :, None] * dq_da[:, None, :] / q[:, None, None]
            idx = np.arange(3)
            mix[:, idx, idx] += -2.0 * d / (a ** 3)[None, :] / q[:, None]
            out["mixed"] = mix
        return out

    def describe(self):
        return {"shape": "ellipsoid", "center": self.center.tolist()}


class Torus(AnalyticField):
    """Exact SDF of a z-axis torus; parameters are (major R, minor r)."""

    shape_kind = "torus"

    def __init__(self, major: float = 0.6, minor: float = 0.25,
                 center=(0.0, 0.0, 0.0), domain: Domain | None = None):
        self.center = np.asarray(center, dtype=np.float64)
        super().__init__([major, minor], domain)

    def _query(self, X, need):
        R, r = self._params
        d = X - self.center
        rho = np.maximum(np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2), 1e-300)
        u = rho - R
        q = np.maximum(np.sqrt(u ** 2 + d[:, 2] ** 2), 1e-300)
        out = {"value": q - r}
        # dq/dx via drho/dx = (x, y, 0)/rho
        drho = np.zeros_like(d)
        drho[:, 0] = d[:, 0] / rho
        drho[:, 1] = d[:, 1] / rho
        g = (u[:, None] * drho) / q[:, None]
        g[:, 2] = d[:, 2] / q
        if "grad_x" in need:
            out["grad_x"] = g
        if "hess_x" in need:
            # q = |w| with w = (u x/rho, u y/rho, z); H = (dw/dx)/q - g g^T / q
            N = X.shape[0]
            dw = np.zeros((N, 3, 3))
            for a in range(2):
                for b in range(2):
                    dw[:, a, b] = (drho[:, a] * drho[:, b]
                                   + u * ((a == b) - drho[:, a] * drho[:, b]) / rho)
            dw[:, 2, 2] = 1.0
            out["hess_x"] = dw / q[:, None, None] \
                - g[:, :, None] * g[:, None, :] / q[:, None, None]
        if "grad_theta" in need:
            gt = np.empty((X.shape[0], 2))
            gt[:, 0] = -u / q
            gt[:, 1] = -1.0
            out["grad_theta"] = gt
        if "mixed" in need:
            N = X.shape[0]
            mix = np.zeros((N, 3, 2))
            # d/dR of g = d/dR [u drho / q] (xy part) and [z/q] (z part)
            dq_dR = -u / q
            mix[:, 0, 0] = (-drho[:, 0] * q - u * drho[:, 0] * dq_dR) / q ** 2
            mix[:, 1, 0] = (-drho[:, 1] * q - u * drho[:, 1] * dq_dR) / q ** 2
            mix[:, 2, 0] = -d[:, 2] * dq_dR / q ** 2
            out["mixed"] = mix
        return out

    def describe(self):
        return {"shape": "torus", "center": self.center.tolist()}


class RoundedBox(AnalyticField):
    """SDF of an axis-aligned rounded box; parameters (hx, hy, hz, rounding)."""

    shape_kind = "box"

    def __init__(self, half_extents=(0.5, 0.5, 0.5), rounding: float = 0.1,
                 center=(0.0, 0.0, 0.0), domain: Domain | None = None):
        self.center = np.asarray(center, dtype=np.float64)
        super().__init__(list(half_extents) + [rounding], domain)

    def _query(self, X, need):
        h = self._params[:3]
        rad = self._params[3]
        d = np.abs(X - self.center) - h[None, :]
        pos = np.maximum(d, 0.0)
        outer = np.linalg.norm(pos, axis=1)
        inner = np.minimum(d.max(axis=1), 0.0)
        out = {"value": outer + inner - rad}
        if need & {"grad_x", "hess_x", "grad_theta", "mixed"}:
            N = X.shape[0]
            sgn = np.sign(X - self.center)
            sgn[sgn == 0] = 1.0
            outside = outer > 0
            g = np.zeros((N, 3))
            safe = np.maximum(outer, 1e-300)
            g_out = sgn * pos / safe[:, None]
            amax = np.argmax(d, axis=1)
            g_in = np.zeros((N, 3))
            g_in[np.arange(N), amax] = sgn[np.arange(N), amax]
            g = np.where(outside[:, None], g_out, g_in)
            if "grad_x" in need:
                out["grad_x"] = g
            if "hess_x" in need:
                H = np.zeros((N, 3, 3))
                u = pos / safe[:, None]
                act = (d > 0).astype(float)
                for a in range(3):
                    for b in range(3):
                        H[:, a, b] = np.where(
                            outside,
                            sgn[:, a] * sgn[:, b] * ((a == b) * act[:, a] - u[:, a] * u[:, b]) / safe,
                            0.0)
                out["hess_x"] = H
            if "grad_theta" in need:
                gt = np.zeros((N, 4))
                gt[:, :3] = np.where(outside[:, None], -pos / safe[:, None], 0.0)
                inside_axis = np.zeros((N, 3))
                inside_axis[np.arange(N), amax] = -1.0
                gt[:, :3] = np.where(outside[:, None], gt[:, :3], inside_axis)
                gt[:, 3] = -1.0
                out["grad_theta"] = gt
            if "mixed" in need:
                # piecewise-linear in h almost everywhere; curvature terms only outside
                mix = np.zeros((N, 3, 4))
                u = pos / safe[:, None]
                act = (d > 0).astype(float)
                for a in range(3):
                    for i in range(3):
                        mix[:, a, i] = np.where(
                            outside,
                            sgn[:, a] * (-(a == i) * act[:, i] + u[:, a] * u[:, i]) / safe,
                            0.0)
                out["mixed"] = mix
        return out

    def describe(self):
        return {"shape": "box", "center": self.center.tolist()}


class Capsule(AnalyticField):
    """SDF of a capsule (segment a-b swept by a sphere); the radius is the parameter."""

    shape_kind = "capsule"

    def __init__(self, a=(0.0, 0.0, -0.5), b=(0.0, 0.0, 0.5), radius: float = 0.3,
                 domain: Domain | None = None):
        self.a = np.asarray(a, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        super().__init__([radius], domain)

    def _query(self, X, need):
        ab = self.b - self.a
        t = np.clip((X - self.a) @ ab / (ab @ ab), 0.0, 1.0)
        closest = self.a + t[:, None] * ab[None, :]
        d = X - closest
        rho = np.maximum(np.linalg.norm(d, axis=1), 1e-300)
        out = {"value": rho - self._params[0]}
        unit = d / rho[:, None]
        if "grad_x" in need:
            out["grad_x"] = unit
        if "hess_x" in need:
            N = X.shape[0]
            eye = np.eye(3)[None]
            H = (eye - unit[:, :, None] * unit[:, None, :]) / rho[:, None, None]
            on_body = (t > 0) & (t < 1)
            axis = ab / np.linalg.norm(ab)
            H_body = (eye - axis[None, :, None] * axis[None, None, :]
                      - unit[:, :, None] * unit[:, None, :]) / rho[:, None, None]
            out["hess_x"] = np.where(on_body[:, None, None], H_body, H)
        if "grad_theta" in need:
            out["grad_theta"] = np.full((X.shape[0], 1), -1.0)
        if "mixed" in need:
            out["mixed"] = np.zeros((X.shape[0], 3, 1))
        return out

    def describe(self):
        return {"shape": "capsule", "a": self.a.tolist(), "b": self.b.tolist()}


class Union(AnalyticField):
    """min-union of analytic children; blocks come from the closest child."""

    shape_kind = "union"

    def __init__(self, children, domain: Domain | None = None):
        self.children = list(children)
        params = np.concatenate([c.params for c in self.children])
        super().__init__(params, domain)
        self._splits = np.cumsum([c.param_count for c in self.children])[:-1]

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        parts = np.split(theta, self._splits)
        return Union([c.with_params(p) for c, p in zip(self.children, parts)],
                     domain=self.domain)

    def _query(self, X, need):
        child_out = [c._query(X, need) for c in self.children]
        vals = np.stack([o["value"] for o in child_out], axis=1)
        winner = np.argmin(vals, axis=1)
        N = X.shape[0]
        out = {"value": vals[np.arange(N), winner]}
        P = self.param_count
        offs = np.concatenate([[0], self._splits, [P]])
        if "grad_x" in need:
            g = np.zeros((N, 3))
            for k, o in enumerate(child_out):
                m = winner == k
                g[m] = o["grad_x"][m]
            out["grad_x"] = g
        if "hess_x" in need:
            H = np.zeros((N, 3, 3))
            for k, o in enumerate(child_out):
                m = winner == k
                H[m] = o["hess_x"][m]
            out["hess_x"] = H
        if "grad_theta" in need:
            gt = np.zeros((N, P))
            for k, o in enumerate(child_out):
                m = winner == k
                gt[np.ix_(m, np.arange(offs[k], offs[k + 1]))] = o["grad_theta"][m]
            out["grad_theta"] = gt
        if "mixed" in need:
            mx = np.zeros((N, 3, P))
            for k, o in enumerate(child_out):
                m = winner == k
                mx[np.ix_(m, np.arange(3), np.arange(offs[k], offs[k + 1]))] = o["mixed"][m]
            out["mixed"] = mx
        return out

    def describe(self):
        return {"shape": "union", "children": [c.describe() for c in self.children]}


class Scaled(ImplicitField):
    """c * f with c > 0 fixed.  Same zero set; used to check basis invariance."""

    kind = "scaled"

    def __init__(self, base: ImplicitField, scale: float):
        if scale <= 0:
            raise ShapeMismatch("scale must be positive")
        self.base = base
        self.scale = float(scale)
        self.domain = base.domain

    @property
    def params(self):
        return self.base.params

    def with_params(self, theta):
        return Scaled(self.base.with_params(theta), self.scale)

    def _query(self, X, need):
        out = self.base._query(X, need)
        return {k: v * self.scale for k, v in out.items()}


# ---------------------------------------------------------------------------
# Neural fields
# ---------------------------------------------------------------------------


class SirenField(ImplicitField):
    """Scalar sine MLP field; the default 3-32-32-32-1 net has P = 2273."""

    kind = "siren"

    def __init__(self, widths=(3, 32, 32, 32, 1), omega0: float = 30.0,
                 params: Array | None = None, seed: int | None = 0,
                 domain: Domain | None = None):
        if widths[0] != 3 or widths[-1] != 1:
            raise ShapeMismatch("scalar shape field must map R^3 -> R")
        self.net = SineMlp(widths, omega0=omega0, params=params, seed=seed)
        if domain is not None:
            self.domain = domain

    @property
    def params(self):
        return self.net.params

    def with_params(self, theta):
        return SirenField(self.net.widths, omega0=self.net.omega0, params=theta,
                          domain=self.domain)

    def _query(self, X, need):
        q = self.net.query(X, jac_x="grad_x" in need, hess_x="hess_x" in need,
                           grad_params="grad_theta" in need, mixed="mixed" in need)
        out = {"value": q["value"][:, 0]}
        if "grad_x" in need:
            out["grad_x"] = q["jac_x"][:, 0]
        if "hess_x" in need:
            out["hess_x"] = q["hess_x"][:, 0]
        if "grad_theta" in need:
            out["grad_theta"] = q["grad_params"][:, 0]
        if "mixed" in need:
            out["mixed"] = q["mixed"][:, 0]
        return out

    def param_backward(self, X, value_bar=None, grad_bar=None):
        vb = None if value_bar is None else np.asarray(value_bar)[:, None]
        jb = None if grad_bar is None else np.asarray(grad_bar)[:, None, :]
        return self.net.param_backward(X, value_bar=vb, jac_bar=jb)

    def describe(self):
        return self.net.describe()


class LatentField(ImplicitField):
    """Decoder f(x, l) with a per-shape latent code appended to the input.

    The flat parameter vector is [decoder params, latent]; with
    ``latent_only`` the editing basis covers just the trailing latent block
    and the decoder stays frozen.
    """

    kind = "latent"

    def __init__(self, decoder: SineMlp, latent: Array, latent_only: bool = True,
                 domain: Domain | None = None):
        latent = np.ascontiguousarray(latent, dtype=np.float64)
        if decoder.n_in != 3 + latent.shape[0]:
            raise ShapeMismatch(
                f"decoder expects {decoder.n_in} inputs, latent has {latent.shape[0]}")
        if latent.shape[0] < 1:
            raise ShapeMismatch("latent dimension must be >= 1")
        self.decoder = decoder
        self.latent = latent
        self.latent.flags.writeable = False
        self.latent_only = latent_only
        if domain is not None:
            self.domain = domain

    @property
    def latent_dim(self) -> int:
        return self.latent.shape[0]

    @property
    def params(self):
        return np.concatenate([self.decoder.params, self.latent])

    @property
    def latent_mask(self) -> Array:
        p = self.decoder.param_count
        return np.arange(p, p + self.latent_dim)

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        p = self.decoder.param_count
        if theta.shape != (p + self.latent_dim,):
            raise ShapeMismatch("parameter count mismatch")
        return LatentField(self.decoder.with_params(theta[:p]), theta[p:],
                           latent_only=self.latent_only, domain=self.domain)

    def with_latent(self, latent):
        return LatentField(self.decoder, latent, latent_only=self.latent_only,
                           domain=self.domain)

    def _joint_input(self, X):
        return np.concatenate(
            [X, np.broadcast_to(self.latent, (X.shape[0], self.latent_dim))], axis=1)

    def _query(self, X, need):
        U = self._joint_input(X)
        latent_only = self.latent_only
        want_dec = (not latent_only) and bool(need & {"grad_theta", "mixed"})
        q = self.decoder.query(
            U,
            jac_x="grad_x" in need or "grad_theta" in need,
            hess_x="hess_x" in need or "mixed" in need,
            grad_params=want_dec and "grad_theta" in need,
            mixed=want_dec and "mixed" in need,
        )
        out = {"value": q["value"][:, 0]}
        if "grad_x" in need:
            out["grad_x"] = q["jac_x"][:, 0, :3]
        if "hess_x" in need:
            out["hess_x"] = q["hess_x"][:, 0, :3, :3]
        if "grad_theta" in need:
            glat = q["jac_x"][:, 0, 3:]
            if latent_only:
                gdec = np.zeros((X.shape[0], self.decoder.param_count))
            else:
                gdec = q["grad_params"][:, 0]
            out["grad_theta"] = np.concatenate([gdec, glat], axis=1)
        if "mixed" in need:
            mlat = q["hess_x"][:, 0, :3, 3:]
            if latent_only:
                mdec = np.zeros((X.shape[0], 3, self.decoder.param_count))
            else:
                mdec = q["mixed"][:, 0, :3, :]
            out["mixed"] = np.concatenate([mdec, mlat], axis=2)
        return out

    def describe(self):
        d = self.decoder.describe()
        d["latent_dim"] = self.latent_dim
        return d


# ---------------------------------------------------------------------------
# Checkpoints: versioned JSON, bit-exact parameter round trip
# ---------------------------------------------------------------------------

_ANALYTIC_KINDS = {
    "sphere": Sphere, "ellipsoid": Ellipsoid, "torus": Torus,
    "box": RoundedBox, "capsule": Capsule,
}


def _encode_params(theta: Array) -> dict:
    raw = np.ascontiguousarray(theta, dtype="<f8").tobytes()
    return {"encoding": "base64/float64-le",
            "data": base64.b64encode(raw).decode("ascii")}


def _decode_params(obj) -> Array:
    if isinstance(obj, list):
        return np.asarray(obj, dtype=np.float64)
    if obj.get("encoding") != "base64/float64-le":
        raise ShapeMismatch(f"unknown parameter encoding {obj.get('encoding')!r}")
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def checkpoint_dict(field: ImplicitField) -> dict:
    doc = {"format": "fieldedit/checkpoint", "version": 1,
           "kind": field.kind, "domain": field.domain.to_json()}
    if isinstance(field, SirenField):
        doc["net"] = field.net.describe()
        doc["params"] = _encode_params(field.params)
    elif isinstance(field, LatentField):
        doc["net"] = field.decoder.describe()
        doc["latent_dim"] = field.latent_dim
        doc["latent_only"] = field.latent_only
        doc["params"] = _encode_params(field.decoder.params)
        doc["latent"] = _encode_params(field.latent)
    elif isinstance(field, Union):
        doc["kind"] = "analytic"
        doc["shape"] = field.describe()
        doc["params"] = _encode_params(field.params)
    elif isinstance(field, AnalyticField):
        doc["kind"] = "analytic"
        doc["shape"] = field.describe()
        doc["params"] = _encode_params(field.params)
    else:
        raise ShapeMismatch(f"cannot checkpoint field of kind {field.kind}")
    return doc


def field_from_dict(doc: dict) -> ImplicitField:
    if doc.get("format") != "fieldedit/checkpoint":
        raise ShapeMismatch("not a fieldedit checkpoint")
    if doc.get("version") != 1:
        raise ShapeMismatch(f"unsupported checkpoint version {doc.get('version')}")
    domain = Domain.from_json(doc["domain"])
    kind = doc["kind"]
    if kind == "siren":
        net = doc["net"]
        return SirenField(tuple(net["widths"]), omega0=net["omega0"],
                          params=_decode_params(doc["params"]), domain=domain)
    if kind == "latent":
        net = doc["net"]
        decoder = SineMlp(tuple(net["widths"]), omega0=net["omega0"],
                          params=_decode_params(doc["params"]))
        return LatentField(decoder, _decode_params(doc["latent"]),
                           latent_only=doc.get("latent_only", True), domain=domain)
    if kind == "analytic":
        field = _analytic_from_shape(doc["shape"], domain)
        return field.with_params(_decode_params(doc["params"]))
    raise ShapeMismatch(f"unknown checkpoint kind {kind!r}")


def _analytic_from_shape(shape: dict, domain: Domain) -> AnalyticField:
    name = shape["shape"]
    if name == "union":
        children = [_analytic_from_shape(c, domain) for c in shape["children"]]
        return Union(children, domain=domain)
    cls = _ANALYTIC_KINDS.get(name)
    if cls is None:
        raise ShapeMismatch(f"unknown analytic shape {name!r}")
    if name == "capsule":
        return Capsule(shape["a"], shape["b"], domain=domain)
    if name in ("sphere", "ellipsoid", "torus", "box"):
        kw = {"center": shape.get("center", (0, 0, 0)), "domain": domain}
        return cls(**kw)
    raise ShapeMismatch(f"unknown analytic shape {name!r}")


def save_checkpoint(field: ImplicitField, path) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(field), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> ImplicitField:
    with open(path) as fh:
        return field_from_dict(json.load(fh))
