"""Visualize how single parameters move the boundary.

Each learnable parameter p owns a basis function b_p on the surface: the
normal velocity the boundary picks up per unit increase of that parameter.
This script colors the extracted mesh by b_p for a few parameters across
the layers and writes one OBJ per picked index (red = outward, blue =
inward, white = indifferent).
"""

from pathlib import Path

from fieldedit import load_checkpoint, marching_cubes, write_obj
from fieldedit.sensitivity import basis_rows

ckpt = Path(__file__).resolve().parents[1] / "checkpoints" / "sphere.json"
field = load_checkpoint(ckpt)

mesh = marching_cubes(field, 80)
B = basis_rows(field, mesh.vertices)

# one weight from each end of the network plus the output bias
picks = [0, 700, 1800, field.param_count - 1]
for p in picks:
    mesh.scalars["basis"] = B[:, p]
    out = f"basis_{p:04d}.obj"
    write_obj(mesh, out, scalar="basis")
    print(f"{out}: b_{p} in [{B[:, p].min():+.3f}, {B[:, p].max():+.3f}]")
