"""Rigidity-regularized editing of a capsule.

Tilts the top of an anchored capsule two ways: a plain least-squares edit
(matches the prescribed boundary motion, no opinion about the rest) and the
Killing-energy formulation, which finds a near-isometric deformation
expressible by the network.  Compares both under the same energies.
"""

from pathlib import Path

import numpy as np

from fieldedit import RigidConfig, edit, killing_energy, load_checkpoint, rigid_edit
from fieldedit.editing import EditSpec, TargetSpec
from fieldedit.geometry import SampleSet, area_weights, sample_surface
from fieldedit.regions import HalfSpaceRegion
from fieldedit.rigid import constraint_energy

capsule = load_checkpoint(Path(__file__).resolve().parents[1]
                          / "tests" / "_cache" / "capsule-v1.json")

pivot = np.array([0.0, 0.0, -0.8])


def tilt(X):
    arm = X - pivot
    return 0.06 * np.stack([np.zeros(len(X)), -arm[:, 2], arm[:, 1]], axis=1)


top = HalfSpaceRegion((0, 0, 1), 0.55)
bottom = HalfSpaceRegion((0, 0, -1), 0.55)

plain, _ = edit(capsule, EditSpec(targets=[TargetSpec(top, tilt)],
                                  fixed_region=bottom, target_count=150,
                                  fixed_count=150, splits=1, lam=0.1, seed=0))
d_plain = plain.params - capsule.params

print("optimizing the rigid objective (a minute or two) ...")
config = RigidConfig(target_region=top, target_displacement=tilt,
                     anchor_region=bottom, alpha=0.03, iterations=500,
                     sample_count=600, target_count=150, anchor_count=150,
                     closed_form_normal=True, lr=2e-3, seed=0)
rigid_field, ft, trace, d_rigid = rigid_edit(capsule, config)

ek_set = area_weights(capsule, sample_surface(capsule, 600, seed=31))
tgt = sample_surface(capsule, 150, region=top, seed=32)
anc = sample_surface(capsule, 150, region=bottom, seed=33)
ec_set = SampleSet.concat([tgt, anc])
goals = np.concatenate([tilt(tgt.positions), np.zeros((150, 3))])

for name, dt, f in (("plain edit", d_plain, None), ("rigid edit", d_rigid, ft)):
    ek = killing_energy(capsule, ek_set, ft=f, dtheta=dt)
    ec = constraint_energy(capsule, ec_set, goals, ft=f, dtheta=dt)
    print(f"{name}: E_K = {ek:10.4e}   E_C = {ec:10.4e}")
