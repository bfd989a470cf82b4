"""Surface sampling, level-set extraction and integral oracles.

The editing machinery itself is mesh-free; meshes appear only for export,
visualization and as independent area/volume oracles in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from skimage import measure as sk_measure

from .errors import (EmptyZeroSet, MissingWeights, ProjectionFailure,
                     RegionUnreachable, ShapeMismatch, SingularGradient)
from .fields import EPS_GRAD, ImplicitField, normals
from .regions import Region

Array = np.ndarray

TAU_SURF = 1e-5   # |f| tolerance for a point to count as on-surface


@dataclass
class SampleSet:
    """Batch of surface samples: positions, outward normals, optional extras.

    ``area_weight`` holds each sample's share of the surface measure, so
    sums over the set approximate surface integrals.
    """

    positions: Array
    normals: Array
    curvature: Array | None = None
    area_weight: Array | None = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=np.float64))
        if self.positions.shape != self.normals.shape:
            raise ShapeMismatch("positions and normals must match in shape")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def subset(self, mask) -> "SampleSet":
        return SampleSet(
            self.positions[mask], self.normals[mask],
            None if self.curvature is None else self.curvature[mask],
            None if self.area_weight is None else self.area_weight[mask])

    @staticmethod
    def concat(parts) -> "SampleSet":
        def cat(attr):
            vals = [getattr(p, attr) for p in parts]
            return None if any(v is None for v in vals) else np.concatenate(vals)
        return SampleSet(np.concatenate([p.positions for p in parts]),
                         np.concatenate([p.normals for p in parts]),
                         cat("curvature"), cat("area_weight"))


@dataclass
class Mesh:
    vertices: Array
    triangles: Array
    scalars: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ShapeMismatch("triangle index out of range")

    def triangle_areas(self) -> Array:
        v = self.vertices
        t = self.triangles
        c = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(c, axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def volume(self) -> float:
        """Enclosed volume by the divergence theorem (orientation-robust)."""
        v = self.vertices
        t = self.triangles
        signed = np.einsum("ij,ij->i", v[t[:, 0]],
                           np.cross(v[t[:, 1]], v[t[:, 2]])) / 6.0
        return float(abs(signed.sum()))

    def edge_count(self) -> int:
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return len(np.unique(e, axis=0))

    def euler_characteristic(self) -> int:
        return len(self.vertices) - self.edge_count() + len(self.triangles)


# ---------------------------------------------------------------------------
# Projection to the zero level set
# ---------------------------------------------------------------------------


def project_points(field: ImplicitField, X: Array, max_iters: int = 50,
                   tau: float = TAU_SURF):
    """Newton projection x <- x - f grad/|grad|^2, batched.

    Returns (projected points, converged mask).  Points that leave the
    domain or hit a degenerate gradient are marked unconverged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64)).copy()
    alive = np.ones(len(X), dtype=bool)
    done = np.zeros(len(X), dtype=bool)
    for _ in range(max_iters + 1):
        idx = np.flatnonzero(alive & ~done)
        if idx.size == 0:
            break
        q = field.query(X[idx], grad_x=True)
        f, g = q["value"], q["grad_x"]
        gn2 = np.einsum("nd,nd->n", g, g)
        ok = np.sqrt(gn2) > EPS_GRAD
        conv = np.abs(f) <= tau
        done[idx[conv]] = True
        alive[idx[~ok & ~conv]] = False
        step = idx[ok & ~conv]
        if step.size == 0:
            continue
        sel = ok & ~conv
        X[step] -= (f[sel] / gn2[sel])[:, None] * g[sel]
        inside = field.domain.contains(X[step])
        alive[step[~inside]] = False
    return X, done


def project_to_surface(field: ImplicitField, x: Array, max_iters: int = 50,
                       tau: float = TAU_SURF) -> Array:
    x = np.asarray(x, dtype=np.float64).reshape(1, 3)
    q = field.query(x, grad_x=True)
    if np.linalg.norm(q["grad_x"][0]) <= EPS_GRAD:
        raise SingularGradient("degenerate gradient at projection seed")
    Xp, ok = project_points(field, x, max_iters=max_iters, tau=tau)
    if not ok[0]:
        raise ProjectionFailure(
            f"projection did not reach |f| <= {tau} in {max_iters} iterations")
    return Xp[0]


def has_zero_set(field: ImplicitField, scan: int = 24) -> bool:
    vals = grid_values(field, scan)
    return bool(vals.min() <= 0.0 <= vals.max())


def _farthest_point_downselect(pool: Array, count: int, start: int = 0) -> Array:
    """Greedy farthest-point selection; deterministic given pool order."""
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start
    d2 = np.einsum("nd,nd->n", pool - pool[start], pool - pool[start])
    for k in range(1, count):
        nxt = int(np.argmax(d2))
        chosen[k] = nxt
        dd = np.einsum("nd,nd->n", pool - pool[nxt], pool - pool[nxt])
        np.minimum(d2, dd, out=d2)
    return chosen


def sample_surface(field: ImplicitField, count: int, region: Region | None = None,
                   seed: int = 0, tau: float = TAU_SURF,
                   perturb_radius: float = 0.05, oversample: int = 8,
                   budget: int = 1_000_000) -> SampleSet:
    """Draw ``count`` well-spread samples of the zero set, optionally region-restricted.

    Rejection sampling on the domain, falling back to perturbations of
    already-found points for small regions, then a farthest-point pass for a
    blue-noise-like spread.  Deterministic per seed.
    """
    if count < 1:
        raise ShapeMismatch("count must be >= 1")
    if not has_zero_set(field):
        raise EmptyZeroSet("field has no sign change on the domain scan grid")
    rng = np.random.default_rng(seed)
    want_pool = max(count * oversample, count + 32)
    pool = []
    pooled = 0
    trials = 0
    while pooled < want_pool:
        if trials >= budget:
            if pooled >= count:
                break
            raise RegionUnreachable(
                f"rejection budget {budget} exhausted with {pooled} accepted samples")
        n_draw = min(4096, budget - trials)
        if pool and trials > budget // 4:
            base = np.concatenate(pool)
            picks = base[rng.integers(0, len(base), n_draw)]
            cand = picks + rng.normal(0.0, perturb_radius, (n_draw, 3))
            lo, up = field.domain.lo, field.domain.up
            cand = np.clip(cand, lo, up)
        else:
            cand = field.domain.sample(rng, n_draw)
        trials += n_draw
        proj, ok = project_points(field, cand, tau=tau)
        if region is not None:
            ok &= region.contains(proj)
        ok &= field.domain.contains(proj)
        if np.any(ok):
            pool.append(proj[ok])
            pooled += int(ok.sum())
    pool = np.concatenate(pool)[:max(want_pool, count)]
    if len(pool) < count:
        raise RegionUnreachable(
            f"only {len(pool)} surface points found, need {count}")
    keep = _farthest_point_downselect(pool, count)
    pts = pool[np.sort(keep)]
    return SampleSet(pts, normals(field, pts))


# ---------------------------------------------------------------------------
# Grids, marching cubes, volume
# ---------------------------------------------------------------------------


def grid_axes(domain, resolution: int):
    return [np.linspace(domain.lo[d], domain.up[d], resolution + 1) for d in range(3)]


def grid_values(field: ImplicitField, resolution: int, chunk: int = 262144) -> Array:
    """Field values on the (R+1)^3 corner grid of the domain, x-major."""
    axes = grid_axes(field.domain, resolution)
    shape = (resolution + 1,) * 3
    out = np.empty(shape)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    for s in range(0, len(pts), chunk):
        out.reshape(-1)[s:s + chunk] = field.value(pts[s:s + chunk])
    return out


def marching_cubes(field: ImplicitField, resolution: int = 64) -> Mesh:
    if resolution < 8:
        raise ShapeMismatch("marching cubes needs resolution >= 8")
    vals = grid_values(field, resolution)
    if not (vals.min() <= 0.0 <= vals.max()):
        raise EmptyZeroSet("no zero crossing on the grid")
    spacing = tuple((field.domain.up - field.domain.lo) / resolution)
    verts, faces, _, _ = sk_measure.marching_cubes(
        vals, level=0.0, spacing=spacing, allow_degenerate=False)
    verts = verts + field.domain.lo[None, :]
    return Mesh(verts, faces)


def estimate_volume(field: ImplicitField, resolution: int = 128,
                    subdiv: int = 4) -> float:
    """Volume of {f <= 0}: full-cell count plus trilinear sub-cell correction."""
    if resolution < 32:
        raise ShapeMismatch("volume estimation needs resolution >= 32")
    vals = grid_values(field, resolution)
    corners = np.stack([
        vals[:-1, :-1, :-1], vals[1:, :-1, :-1], vals[:-1, 1:, :-1], vals[1:, 1:, :-1],
        vals[:-1, :-1, 1:], vals[1:, :-1, 1:], vals[:-1, 1:, 1:], vals[1:, 1:, 1:],
    ], axis=-1).reshape(-1, 8)
    cmin, cmax = corners.min(axis=1), corners.max(axis=1)
    full = cmax <= 0.0
    mixed = (cmin <= 0.0) & ~full
    cell_vol = np.prod((field.domain.up - field.domain.lo) / resolution)
    total = float(full.sum())
    if np.any(mixed):
        mc = corners[mixed]
        t = (np.arange(subdiv) + 0.5) / subdiv
        wx = np.stack([1 - t, t], axis=1)          # (subdiv, 2)
        # trilinear weights for all subdiv^3 probes: (s^3, 8) in corner order
        w = np.einsum("ia,jb,kc->ijkabc", wx, wx, wx).reshape(-1, 2, 2, 2)
        w = w.transpose(0, 3, 2, 1).reshape(-1, 8)  # corner order x-fastest
        probes = mc @ w.T                           # (M, s^3)
        total += float((probes <= 0.0).mean(axis=1).sum())
    return total * cell_vol


def area_weights(field: ImplicitField, samples: SampleSet,
                 resolution: int = 96) -> SampleSet:
    """Uniform Monte Carlo weights: (total mesh area) / I per sample."""
    if len(samples) < 4:
        raise MissingWeights("need at least 4 samples for area weighting")
    total = marching_cubes(field, resolution).area()
    out = SampleSet(samples.positions, samples.normals, samples.curvature,
                    np.full(len(samples), total / len(samples)))
    return out


# ---------------------------------------------------------------------------
# Normal-ray measurement (the independent oracle for boundary motion)
# ---------------------------------------------------------------------------


def measure_normal_motion(field: ImplicitField, origins: Array, directions: Array,
                          t_max: float, scan: int = 128, iters: int = 80) -> Array:
    """Signed distance along each ray to the nearest zero crossing of ``field``.

    Brackets by scanning [-t_max, t_max], then bisects.  Entries with no
    crossing in range come back NaN.  This measures where a surface actually
    moved, independently of any sensitivity prediction.
    """
    origins = np.atleast_2d(origins)
    directions = np.atleast_2d(directions)
    N = len(origins)
    ts = np.linspace(-t_max, t_max, scan + 1)
    pts = origins[:, None, :] + ts[None, :, None] * directions[:, None, :]
    lo, up = field.domain.lo, field.domain.up
    pts = np.clip(pts, lo, up)
    vals = field.value(pts.reshape(-1, 3)).reshape(N, scan + 1)
    sign_change = vals[:, :-1] * vals[:, 1:] <= 0.0
    t_lo = np.full(N, np.nan)
    t_hi = np.full(N, np.nan)
    mid_idx = scan // 2
    for i in range(N):
        js = np.flatnonzero(sign_change[i])
        if js.size == 0:
            continue
        j = js[np.argmin(np.abs(js + 0.5 - mid_idx))]
        t_lo[i], t_hi[i] = ts[j], ts[j + 1]
    ok = ~np.isnan(t_lo)
    if not np.any(ok):
        return t_lo
    a, b = t_lo[ok].copy(), t_hi[ok].copy()
    O, D = origins[ok], directions[ok]
    fa = field.value(np.clip(O + a[:, None] * D, lo, up))
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = field.value(np.clip(O + m[:, None] * D, lo, up))
        left = fa * fm <= 0.0
        b = np.where(left, m, b)
        a = np.where(left, a, m)
        fa = np.where(left, fa, fm)
    t_lo[ok] = 0.5 * (a + b)
    return t_lo


# ---------------------------------------------------------------------------
# Mesh export
# ---------------------------------------------------------------------------


def diverging_colors(values: Array) -> Array:
    """Symmetric blue-white-red map with 0 at neutral white."""
    values = np.asarray(values, dtype=np.float64)
    vmax = np.abs(values).max()
    t = values / vmax if vmax > 0 else np.zeros_like(values)
    rgb = np.ones((len(values), 3))
    pos = t >= 0
    rgb[pos, 1] = 1.0 - t[pos]
    rgb[pos, 2] = 1.0 - t[pos]
    rgb[~pos, 0] = 1.0 + t[~pos]
    rgb[~pos, 1] = 1.0 + t[~pos]
    return np.clip(rgb, 0.0, 1.0)


def write_obj(mesh: Mesh, path, scalar: str | None = None) -> None:
    colors = None
    if scalar is not None:
        colors = diverging_colors(mesh.scalars[scalar])
    with open(path, "w") as fh:
        for i, v in enumerate(mesh.vertices):
            if colors is None:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            else:
                c = colors[i]
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g} "
                         f"{c[0]:.6g} {c[1]:.6g} {c[2]:.6g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def write_ply(mesh: Mesh, path, scalar: str | None = None) -> None:
    vals = mesh.scalars.get(scalar) if scalar else None
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(mesh.vertices)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if vals is not None:
            fh.write("property float quality\n")
        fh.write(f"element face {len(mesh.triangles)}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        for i, v in enumerate(mesh.vertices):
            line = f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}"
            if vals is not None:
                line += f" {vals[i]:.9g}"
            fh.write(line + "\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def read_obj(path) -> Mesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise ShapeMismatch(f"no vertices in {path}")
    return Mesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))
