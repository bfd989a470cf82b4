"""Turning prescribed boundary displacements into parameter updates.

The pipeline per iteration: sample / advect boundary points, project the
prescribed displacement onto current normals, assemble the sensitivity
system, solve the Tikhonov-regularized least squares, project the update
onto active constraint null spaces, apply.

Two iteration modes share this loop:

* ``split``  - the prescribed displacement is divided into equal parts,
               one per iteration (large-displacement geometric editing).
* ``pursue`` - every iteration re-prescribes the *remaining* displacement
               toward the original goal positions and stops once the
               residual settles (the semantic editing loop, where iteration
               count depends on the regularization strength).
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg

from .errors import (DegenerateConstraint, EmptyTarget, InvalidSpec,
                     ShapeMismatch, SingularSystem)
from .fields import ImplicitField, normals
from .geometry import SampleSet, area_weights, project_points, sample_surface
from .regions import Region, region_from_json
from .sensitivity import (ConstraintBasis, assemble_system,
                          surface_constraint_basis, volume_constraint_basis)
from . import fields as field_mod

Array = np.ndarray

CONVERGENCE_TOL = 1e-6    # residual change between pursue iterations


@dataclass
class TargetSpec:
    """A displacement prescription on one boundary region."""

    region: Region
    displacement: object          # (3,) vector, scalar, or callable(X) -> per-point
    kind: str = "vector"          # "vector" | "normal"

    def values_at(self, X: Array):
        d = self.displacement
        if callable(d):
            d = np.asarray(d(X), dtype=np.float64)
        else:
            d = np.asarray(d, dtype=np.float64)
        if self.kind == "vector":
            return np.broadcast_to(d, (X.shape[0], 3)).copy()
        return np.broadcast_to(d, (X.shape[0],)).astype(np.float64)

    def to_json(self):
        d = self.displacement
        if callable(d):
            raise InvalidSpec("callable targets cannot be serialized",
                              field="target.displacement")
        value = np.asarray(d, dtype=float).tolist()
        return {"region": self.region.to_json(),
                "displacement": {"kind": self.kind, "value": value}}


@dataclass
class EditSpec:
    """Everything the edit loop needs; serializable to the documented JSON form."""

    targets: list
    fixed_region: Region | None = None
    target_count: int = 100
    fixed_count: int = 200
    lam: float = 0.1
    splits: int = 8
    mode: str = "split"
    normal_filter: float | None = 0.2
    constraints: tuple = ()
    fixed_weight: float = 1.0
    mask: str | Array | None = None      # None/"all" or "latent" or explicit indices
    constraint_count: int = 400
    weight_resolution: int = 64
    remaining_tol: float | None = None     # pursue mode: stop below this deviation
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.targets, TargetSpec):
            self.targets = [self.targets]
        if not self.targets:
            raise InvalidSpec("at least one target region is required", field="targets")
        if self.lam < 0:
            raise InvalidSpec("lambda must be >= 0", field="lambda")
        if self.splits < 1:
            raise InvalidSpec("splits must be >= 1", field="splits")
        if self.mode not in ("split", "pursue"):
            raise InvalidSpec(f"unknown mode {self.mode!r}", field="mode")
        for c in self.constraints:
            if c not in ("volume", "area"):
                raise InvalidSpec(f"unknown constraint {c!r}", field="constraints")
        if self.mode == "pursue":
            for t in self.targets:
                if t.kind != "vector":
                    raise InvalidSpec("pursue mode needs vector targets",
                                      field="targets.displacement")

    def to_json(self) -> dict:
        return {
            "targets": [t.to_json() for t in self.targets],
            "fixed_region": None if self.fixed_region is None
            else self.fixed_region.to_json(),
            "samples": {"target": self.target_count, "fixed": self.fixed_count,
                        "constraint": self.constraint_count},
            "lambda": self.lam,
            "splits": self.splits,
            "mode": self.mode,
            "normal_filter": self.normal_filter,
            "constraints": list(self.constraints),
            "fixed_weight": self.fixed_weight,
            "mask": "latent" if isinstance(self.mask, str) and self.mask == "latent"
            else ("all" if self.mask is None else np.asarray(self.mask).tolist()),
            "weight_resolution": self.weight_resolution,
            "remaining_tol": self.remaining_tol,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(doc: dict) -> "EditSpec":
        if not isinstance(doc, dict):
            raise InvalidSpec("edit spec must be a JSON object", field="")
        raw_targets = doc.get("targets")
        if raw_targets is None and "target" in doc:
            raw_targets = [doc["target"]]
        if not raw_targets:
            raise InvalidSpec("missing 'targets'", field="targets")
        targets = []
        for i, t in enumerate(raw_targets):
            disp = t.get("displacement")
            if not isinstance(disp, dict) or "kind" not in disp or "value" not in disp:
                raise InvalidSpec("displacement needs 'kind' and 'value'",
                                  field=f"targets[{i}].displacement")
            kind = disp["kind"]
            if kind not in ("vector", "normal"):
                raise InvalidSpec(f"unknown displacement kind {kind!r}",
                                  field=f"targets[{i}].displacement.kind")
            value = np.asarray(disp["value"], dtype=float)
            if kind == "vector" and value.shape != (3,):
                raise InvalidSpec("vector displacement needs 3 components",
                                  field=f"targets[{i}].displacement.value")
            if kind == "normal" and value.shape != ():
                raise InvalidSpec("normal displacement must be a scalar",
                                  field=f"targets[{i}].displacement.value")
            targets.append(TargetSpec(region_from_json(t.get("region")),
                                      value if kind == "vector" else float(value),
                                      kind))
        samples = doc.get("samples", {})
        mask = doc.get("mask", "all")
        if mask == "all":
            mask = None
        elif mask == "latent":
            pass
        elif isinstance(mask, list):
            mask = np.asarray(mask, dtype=np.int64)
        else:
            raise InvalidSpec(f"unknown mask {mask!r}", field="mask")
        try:
            spec = EditSpec(
                targets=targets,
                fixed_region=(region_from_json(doc["fixed_region"])
                              if doc.get("fixed_region") else None),
                target_count=int(samples.get("target", 100)),
                fixed_count=int(samples.get("fixed", 200)),
                lam=float(doc.get("lambda", 0.1)),
                splits=int(doc.get("splits", 8)),
                mode=doc.get("mode", "split"),
                normal_filter=(None if doc.get("normal_filter") is None
                               else float(doc["normal_filter"])),
                constraints=tuple(doc.get("constraints", ())),
                fixed_weight=float(doc.get("fixed_weight", 1.0)),
                mask=mask,
                constraint_count=int(samples.get("constraint", 400)),
                weight_resolution=int(doc.get("weight_resolution", 64)),
                remaining_tol=(None if doc.get("remaining_tol") is None
                               else float(doc["remaining_tol"])),
                seed=int(doc.get("seed", 0)),
            )
        except (TypeError, ValueError) as e:
            raise InvalidSpec(f"malformed edit spec: {e}", field="") from None
        return spec


@dataclass
class EditReport:
    """Per-iteration observability for tests, traces and the UI."""

    residuals: list = dc_field(default_factory=list)       # |B dtheta - dy|^2
    update_norms: list = dc_field(default_factory=list)
    constraint_drift: list = dc_field(default_factory=list)  # dict tag -> predicted dH
    remaining: list = dc_field(default_factory=list)        # pursue mode: mean |remaining|
    converged: bool = False
    iterations: int = 0
    snapshot_id: str = ""

    def record(self, residual, norm, drift, remaining):
        self.residuals.append(float(residual))
        self.update_norms.append(float(norm))
        self.constraint_drift.append({k: float(v) for k, v in drift.items()})
        self.remaining.append(None if remaining is None else float(remaining))
        self.iterations += 1

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": self.residuals,
            "update_norms": self.update_norms,
            "constraint_drift": self.constraint_drift,
            "remaining": self.remaining,
            "snapshot_id": self.snapshot_id,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        tags = sorted({k for d in self.constraint_drift for k in d})
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual", "update_norm", "remaining"]
                   + [f"drift_{t}" for t in tags])
        for i in range(self.iterations):
            w.writerow([i, self.residuals[i], self.update_norms[i],
                        "" if self.remaining[i] is None else self.remaining[i]]
                       + [self.constraint_drift[i].get(t, "") for t in tags])
        return buf.getvalue()


def snapshot_id(field: ImplicitField) -> str:
    return hashlib.sha256(np.ascontiguousarray(field.params).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------


def project_targets(samples: SampleSet, targets) -> Array:
    """Scalar targets pass through; vectors are dotted with current normals."""
    n = len(samples)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        if targets.shape[0] != n:
            raise ShapeMismatch(f"{targets.shape[0]} targets for {n} samples")
        return targets.copy()
    if targets.shape != (n, 3):
        raise ShapeMismatch(f"targets must be (I,) or (I, 3), got {targets.shape}")
    return np.einsum("nd,nd->n", samples.normals, targets)


def filter_by_alignment(samples: SampleSet, target: Array,
                        cos_min: float = 0.2) -> SampleSet:
    """Drop samples whose normals are nearly orthogonal to the vector target."""
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = np.broadcast_to(target, (len(samples), 3))
    nrm = np.linalg.norm(target, axis=1)
    nrm = np.where(nrm == 0, 1.0, nrm)
    align = np.abs(np.einsum("nd,nd->n", samples.normals, target)) / nrm
    keep = align >= cos_min
    if not np.any(keep):
        raise EmptyTarget("normal-alignment filter removed every target sample")
    return samples.subset(keep)


def solve_update(B: Array, dy: Array, lam: float) -> Array:
    """Minimize |B dtheta - dy|^2 + lam |dtheta|^2 via the smaller normal form.

    For P <= I solves (B^T B + lam I) dtheta = B^T dy, otherwise the dual
    (B B^T + lam I) z = dy, dtheta = B^T z; both give the same minimizer.
    """
    B = np.asarray(B, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    if B.ndim != 2 or dy.shape != (B.shape[0],):
        raise ShapeMismatch(f"incompatible system {B.shape} vs {dy.shape}")
    I, P = B.shape
    if lam < 0:
        raise InvalidSpec("lambda must be >= 0", field="lambda")
    if lam == 0 and np.linalg.matrix_rank(B) < P:
        raise SingularSystem("lambda = 0 with rank-deficient system")
    try:
        if P <= I:
            M = B.T @ B
            M[np.diag_indices_from(M)] += lam
            c, low = scipy.linalg.cho_factor(M, check_finite=False)
            return scipy.linalg.cho_solve((c, low), B.T @ dy, check_finite=False)
        M = B @ B.T
        M[np.diag_indices_from(M)] += lam
        c, low = scipy.linalg.cho_factor(M, check_finite=False)
        return B.T @ scipy.linalg.cho_solve((c, low), dy, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(f"normal equations not positive definite: {e}") from None


def project_constrained(dtheta: Array, bases) -> Array:
    """Orthogonal projection of the update onto all constraint null spaces."""
    dtheta = np.asarray(dtheta, dtype=np.float64)
    if isinstance(bases, ConstraintBasis):
        bases = [bases]
    q = []
    for cb in bases:
        v = np.asarray(cb.vector, dtype=np.float64).copy()
        if v.shape != dtheta.shape:
            raise ShapeMismatch("constraint basis length mismatch")
        nrm0 = np.linalg.norm(v)
        if nrm0 == 0:
            raise DegenerateConstraint(f"zero-norm constraint basis ({cb.tag})")
        for u in q:
            v -= (u @ v) * u
        nrm = np.linalg.norm(v)
        if nrm < 1e-12 * nrm0:
            raise DegenerateConstraint(
                f"constraint {cb.tag!r} linearly dependent on earlier constraints")
        q.append(v / nrm)
    out = dtheta.copy()
    for u in q:
        out -= (u @ out) * u
    return out


# ---------------------------------------------------------------------------
# The edit loop
# ---------------------------------------------------------------------------


def _resolve_mask(field: ImplicitField, mask):
    if mask is None:
        return None
    if isinstance(mask, str):
        if mask == "latent":
            try:
                return field.latent_mask
            except AttributeError:
                raise InvalidSpec("field has no latent block", field="mask") from None
        if mask == "all":
            return None
        raise InvalidSpec(f"unknown mask {mask!r}", field="mask")
    return np.asarray(mask, dtype=np.int64)


def _apply_update(field: ImplicitField, dtheta: Array, mask) -> ImplicitField:
    theta = field.params.copy()
    if mask is None:
        theta += dtheta
    else:
        theta[mask] += dtheta
    return field.with_params(theta)


def _constraint_bases(field, spec, mask, stream):
    if not spec.constraints:
        return []
    cs = sample_surface(field, spec.constraint_count, seed=stream)
    cs = area_weights(field, cs, resolution=spec.weight_resolution)
    bases = []
    for tag in spec.constraints:
        if tag == "volume":
            bases.append(volume_constraint_basis(field, cs, mask))
        else:
            cs.curvature = field_mod.mean_curvatures(field, cs.positions)
            bases.append(surface_constraint_basis(field, cs, (1.0, 0.0), mask))
    return bases


def _gather_targets(field, spec):
    """Sample target regions, apply the alignment filter, capture goals."""
    parts, disp = [], []
    for k, t in enumerate(spec.targets):
        ss = sample_surface(field, spec.target_count, region=t.region,
                            seed=[spec.seed, k])
        vals = t.values_at(ss.positions)
        if t.kind == "vector" and spec.normal_filter is not None:
            keep = np.abs(np.einsum("nd,nd->n", ss.normals, vals)) \
                / np.maximum(np.linalg.norm(vals, axis=1), 1e-300) >= spec.normal_filter
            if not np.any(keep):
                raise EmptyTarget(
                    f"normal-alignment filter removed every sample of target {k}")
            ss, vals = ss.subset(keep), vals[keep]
        parts.append(ss)
        if t.kind == "normal":
            disp.append(("normal", vals))
        else:
            disp.append(("vector", vals))
    return parts, disp


def edit(field: ImplicitField, spec: EditSpec, callback=None):
    """Run the iterative editing loop; returns (updated field, report).

    ``callback``, if given, receives one dict per completed iteration.
    """
    mask = _resolve_mask(field, spec.mask)
    report = EditReport()

    target_sets, target_disps = _gather_targets(field, spec)
    tgt = SampleSet.concat(target_sets)
    kinds = np.concatenate([
        np.full(len(s), 0 if d[0] == "normal" else 1)
        for s, d in zip(target_sets, target_disps)])
    scalar_goal = np.concatenate([
        d[1] if d[0] == "normal" else np.zeros(len(s))
        for s, d in zip(target_sets, target_disps)])
    vector_goal = np.concatenate([
        d[1] if d[0] == "vector" else np.zeros((len(s), 3))
        for s, d in zip(target_sets, target_disps)])

    n_t = len(tgt)
    if spec.fixed_region is not None and spec.fixed_count > 0:
        fix = sample_surface(field, spec.fixed_count, region=spec.fixed_region,
                             seed=[spec.seed, 101])
        in_target = np.zeros(len(fix), dtype=bool)
        for t in spec.targets:
            in_target |= t.region.contains(fix.positions)
        fix = fix.subset(~in_target)       # overlapping draws: target intent wins
        pts = np.concatenate([tgt.positions, fix.positions])
        nrm = np.concatenate([tgt.normals, fix.normals])
    else:
        pts, nrm = tgt.positions.copy(), tgt.normals.copy()
    n_all = len(pts)

    origins = pts[:n_t].copy()
    achieved = np.zeros(n_t)               # cumulative normal motion, scalar targets
    goal_pos = origins + vector_goal       # vector-target goal positions

    sqrt_w = np.ones(n_all)
    sqrt_w[n_t:] = np.sqrt(spec.fixed_weight)

    prev_motion = None
    prev_residual = None
    current = field
    for it in range(spec.splits):
        if it > 0:
            pts = pts + prev_motion[:, None] * nrm
            pts, ok = project_points(current, pts)
            if not np.all(ok):
                # keep unconverged points where advection left them
                pass
            nrm = normals(current, pts)
        live = SampleSet(pts, nrm)

        dy = np.zeros(n_all)
        remaining = None
        if spec.mode == "split":
            frac_s = scalar_goal / spec.splits
            frac_v = vector_goal / spec.splits
            dy_t = np.where(kinds == 0, frac_s,
                            np.einsum("nd,nd->n", nrm[:n_t], frac_v))
        else:
            rem_vec = goal_pos - pts[:n_t]
            dy_t = np.einsum("nd,nd->n", nrm[:n_t], rem_vec)
            dy_t = np.where(kinds == 0, scalar_goal - achieved, dy_t)
            rem_len = np.where(kinds == 0, np.abs(scalar_goal - achieved),
                               np.linalg.norm(rem_vec, axis=1))
            remaining = float(np.mean(rem_len))   # measured before this update
            if spec.remaining_tol is not None and remaining <= spec.remaining_tol:
                report.converged = True
                break
        dy[:n_t] = dy_t

        basis = assemble_system(current, live, mask)
        B = basis.matrix * sqrt_w[:, None]
        dtheta = solve_update(B, dy * sqrt_w, spec.lam)

        drift = {}
        if spec.constraints:
            bases = _constraint_bases(current, spec, mask, [spec.seed, 202 + it])
            dtheta = project_constrained(dtheta, bases)
            for cb in bases:
                drift[cb.tag] = cb.vector @ dtheta

        motion = basis.matrix @ dtheta          # predicted normal displacement
        residual = float(np.sum((B @ dtheta - dy * sqrt_w) ** 2))
        current = _apply_update(current, dtheta, mask)
        achieved += motion[:n_t]
        report.record(residual, np.linalg.norm(dtheta), drift, remaining)
        if callback is not None:
            callback({"iteration": it, "residual": residual,
                      "update_norm": float(np.linalg.norm(dtheta)),
                      "remaining": remaining, "drift": report.constraint_drift[-1]})

        prev_motion = motion
        if spec.mode == "pursue":
            if prev_residual is not None and abs(prev_residual - residual) < CONVERGENCE_TOL:
                report.converged = True
                break
            prev_residual = residual

    report.snapshot_id = snapshot_id(current)
    return current, report
