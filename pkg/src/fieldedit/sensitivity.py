"""Boundary sensitivity: how parameter perturbations move the zero level set.

The central object is the per-point basis row

    b(x) = -grad_theta f / |grad_x f|

whose inner product with a parameter step gives the first-order normal
displacement of the boundary at x.  Stacking rows over a sample set yields
the least-squares system of editing; integrating rows against a functional
density yields constraint bases for volume- and area-style functionals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (MissingCurvature, MissingWeights, ShapeMismatch,
                     SingularGradient)
from .fields import EPS_GRAD, ImplicitField
from .geometry import SampleSet

Array = np.ndarray


@dataclass
class SensitivityBasis:
    """Rows of b over a sample set, restricted to the masked parameter subset."""

    matrix: Array            # (I, P_masked)
    samples: SampleSet
    mask: Array | None = None   # indices into the field's full parameter vector

    @property
    def count(self) -> int:
        return self.matrix.shape[0]


@dataclass
class ConstraintBasis:
    """Integrated basis of a functional: moving along it changes the functional."""

    vector: Array
    tag: str
    mask: Array | None = None


def _grad_blocks(field: ImplicitField, X: Array, mask: Array | None,
                 want_mixed: bool = False):
    q = field.query(X, grad_x=True, grad_theta=True, mixed=want_mixed)
    gx, gt = q["grad_x"], q["grad_theta"]
    if mask is not None:
        gt = gt[:, mask]
    norms = np.linalg.norm(gx, axis=1)
    if np.any(norms < EPS_GRAD):
        i = int(np.argmin(norms))
        raise SingularGradient(f"degenerate spatial gradient at sample {i}")
    out = [gx, gt, norms]
    if want_mixed:
        mx = q["mixed"]
        if mask is not None:
            mx = mx[:, :, mask]
        out.append(mx)
    return out


def basis_rows(field: ImplicitField, X: Array, mask: Array | None = None) -> Array:
    """b = -grad_theta f / |grad_x f| at a batch of surface points."""
    gx, gt, norms = _grad_blocks(field, np.atleast_2d(X), mask)
    return -gt / norms[:, None]


def basis_row(field: ImplicitField, x: Array, mask: Array | None = None) -> Array:
    return basis_rows(field, np.asarray(x, float).reshape(1, 3), mask)[0]


def assemble_system(field: ImplicitField, samples: SampleSet,
                    mask: Array | None = None) -> SensitivityBasis:
    """Stack basis rows over the samples, in sample order."""
    if len(samples) < 1:
        raise ShapeMismatch("need at least one sample")
    if mask is not None:
        mask = np.asarray(mask, dtype=np.int64)
        if mask.size == 0:
            raise ShapeMismatch("parameter mask must be nonempty")
    B = basis_rows(field, samples.positions, mask)
    if not np.all(np.isfinite(B)):
        bad = int(np.flatnonzero(~np.isfinite(B).all(axis=1))[0])
        raise SingularGradient(f"non-finite basis row at sample {bad}")
    return SensitivityBasis(B, samples, mask)


def predicted_normal_displacement(basis: SensitivityBasis, dtheta: Array) -> Array:
    dtheta = np.asarray(dtheta, dtype=np.float64)
    if dtheta.shape != (basis.matrix.shape[1],):
        raise ShapeMismatch(
            f"update length {dtheta.shape} does not match basis width "
            f"{basis.matrix.shape[1]}")
    return basis.matrix @ dtheta


def volume_constraint_basis(field: ImplicitField, samples: SampleSet,
                            mask: Array | None = None) -> ConstraintBasis:
    """Basis of the enclosed volume: b_H = sum_i w_i b(x_i) (density h = 1)."""
    if samples.area_weight is None:
        raise MissingWeights("volume constraint needs area-weighted samples")
    B = basis_rows(field, samples.positions, mask)
    vec = samples.area_weight @ B
    return ConstraintBasis(vec, "volume", mask)


def surface_constraint_basis(field: ImplicitField, samples: SampleSet, g,
                             mask: Array | None = None) -> ConstraintBasis:
    """Basis of a surface integral of g: b_G = sum_i w_i (dg/dn + kappa g) b(x_i).

    ``g`` either is a pair of arrays (values, normal derivatives) per sample
    or a callable returning that pair; g = 1 reduces to the area functional.
    """
    if samples.area_weight is None:
        raise MissingWeights("surface constraint needs area-weighted samples")
    if samples.curvature is None:
        raise MissingCurvature("surface constraint needs per-sample curvature")
    if callable(g):
        gv, gn = g(samples.positions, samples.normals)
    else:
        gv, gn = g
    gv = np.broadcast_to(np.asarray(gv, dtype=np.float64), (len(samples),))
    gn = np.broadcast_to(np.asarray(gn, dtype=np.float64), (len(samples),))
    B = basis_rows(field, samples.positions, mask)
    density = samples.area_weight * (gn + samples.curvature * gv)
    return ConstraintBasis(density @ B, "area" if np.all(gv == 1.0) and np.all(gn == 0.0)
                           else "surface", mask)
