"""Region predicates used to mark boundary subsets in edit specs.

Primitives are spheres, boxes and half-spaces; ``all_of / any_of / not`` let
them compose.  The JSON form is the one the edit-spec schema embeds.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidSpec

Array = np.ndarray


class Region:
    def contains(self, X: Array) -> Array:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def __call__(self, X: Array) -> Array:
        return self.contains(np.atleast_2d(np.asarray(X, dtype=np.float64)))


class Everywhere(Region):
    def contains(self, X):
        return np.ones(X.shape[0], dtype=bool)

    def to_json(self):
        return {"type": "everywhere"}


class SphereRegion(Region):
    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        if self.radius <= 0:
            raise InvalidSpec("sphere region needs radius > 0", field="radius")

    def contains(self, X):
        return np.linalg.norm(X - self.center, axis=1) <= self.radius

    def to_json(self):
        return {"type": "sphere", "center": self.center.tolist(), "radius": self.radius}


class BoxRegion(Region):
    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if not np.all(self.lower < self.upper):
            raise InvalidSpec("box region needs lower < upper", field="lower")

    def contains(self, X):
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def to_json(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class HalfSpaceRegion(Region):
    """Points with normal . x >= offset."""

    def __init__(self, normal, offset):
        self.normal = np.asarray(normal, dtype=np.float64)
        n = np.linalg.norm(self.normal)
        if n == 0:
            raise InvalidSpec("half-space normal must be nonzero", field="normal")
        self.normal = self.normal / n
        self.offset = float(offset)

    def contains(self, X):
        return X @ self.normal >= self.offset

    def to_json(self):
        return {"type": "halfspace", "normal": self.normal.tolist(), "offset": self.offset}


class AllOf(Region):
    def __init__(self, parts):
        self.parts = list(parts)

    def contains(self, X):
        m = np.ones(X.shape[0], dtype=bool)
        for p in self.parts:
            m &= p.contains(X)
        return m

    def to_json(self):
        return {"type": "all_of", "parts": [p.to_json() for p in self.parts]}


class AnyOf(Region):
    def __init__(self, parts):
        self.parts = list(parts)

    def contains(self, X):
        m = np.zeros(X.shape[0], dtype=bool)
        for p in self.parts:
            m |= p.contains(X)
        return m

    def to_json(self):
        return {"type": "any_of", "parts": [p.to_json() for p in self.parts]}


class Not(Region):
    def __init__(self, part):
        self.part = part

    def contains(self, X):
        return ~self.part.contains(X)

    def to_json(self):
        return {"type": "not", "part": self.part.to_json()}


def region_from_json(doc) -> Region:
    if doc is None:
        return Everywhere()
    if not isinstance(doc, dict) or "type" not in doc:
        raise InvalidSpec("region must be an object with a 'type'", field="region.type")
    t = doc["type"]
    try:
        if t == "everywhere":
            return Everywhere()
        if t == "sphere":
            return SphereRegion(doc["center"], doc["radius"])
        if t == "box":
            return BoxRegion(doc["lower"], doc["upper"])
        if t == "halfspace":
            return HalfSpaceRegion(doc["normal"], doc["offset"])
        if t == "all_of":
            return AllOf([region_from_json(p) for p in doc["parts"]])
        if t == "any_of":
            return AnyOf([region_from_json(p) for p in doc["parts"]])
        if t == "not":
            return Not(region_from_json(doc["part"]))
    except KeyError as e:
        raise InvalidSpec(f"region {t!r} missing key {e.args[0]!r}",
                          field=f"region.{e.args[0]}") from None
    raise InvalidSpec(f"unknown region type {t!r}", field="region.type")
