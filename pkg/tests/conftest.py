"""Shared fixtures.

Fitted networks are expensive, so they are cached as checkpoints under
tests/_cache and regenerated only when missing (delete the directory to
force a full retrain).  Fixture names carry a version suffix; bump it when
the producing configuration changes.
"""

from pathlib import Path

import pytest

from fieldedit.fields import (Capsule, Sphere, Torus, Union, load_checkpoint,
                              save_checkpoint)
from fieldedit.training import (AutoDecoderConfig, FitConfig, ShapeFamily,
                                fit_sdf, load_auto_decoder, save_auto_decoder,
                                train_auto_decoder)

CACHE = Path(__file__).parent / "_cache"
FIT_CONFIG = FitConfig(iterations=8000, w_normal=0.3, seed=0)


def cached_fit(name: str, target):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / f"{name}-v1.json"
    if path.exists():
        return load_checkpoint(path)
    field = fit_sdf(target, FIT_CONFIG)
    save_checkpoint(field, path)
    return field


def blobby_target():
    return Union([Sphere(0.55, (0.3, 0, 0)),
                  Sphere(0.55, (-0.25, 0.25, 0)),
                  Sphere(0.55, (-0.1, -0.3, 0.2))])


@pytest.fixture(scope="session")
def sphere_mlp():
    return cached_fit("sphere", Sphere(1.0))


@pytest.fixture(scope="session")
def small_sphere_mlp():
    return cached_fit("small_sphere", Sphere(0.5))


@pytest.fixture(scope="session")
def torus_mlp():
    return cached_fit("torus", Torus(0.6, 0.25))


@pytest.fixture(scope="session")
def blobby_mlp():
    return cached_fit("blobby", blobby_target())


@pytest.fixture(scope="session")
def capsule_mlp():
    return cached_fit("capsule", Capsule((0, 0, -0.45), (0, 0, 0.45), 0.35))


@pytest.fixture(scope="session")
def box_family():
    return ShapeFamily.rounded_boxes(count=50, seed=0)


@pytest.fixture(scope="session")
def autodec(box_family):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / "autodec-v1.json"
    if path.exists():
        return load_auto_decoder(path)
    auto = train_auto_decoder(box_family, 8, AutoDecoderConfig(seed=0))
    save_auto_decoder(auto, path)
    return auto


@pytest.fixture(scope="session")
def sphere_family_1d():
    return ShapeFamily.spheres(count=16, seed=3, radius_range=(0.35, 0.95))


@pytest.fixture(scope="session")
def autodec_1d(sphere_family_1d):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / "autodec1d-v1.json"
    if path.exists():
        return load_auto_decoder(path)
    auto = train_auto_decoder(
        sphere_family_1d, 1,
        AutoDecoderConfig(iterations=4000, batch_shapes=8, seed=1,
                          widths_hidden=(32, 32, 32)))
    save_auto_decoder(auto, path)
    return auto
