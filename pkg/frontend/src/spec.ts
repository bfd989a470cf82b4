import type { EditSpec, Vec3 } from "./types.js";
import type { ViewState } from "./store.js";

/** Build an edit spec from the brushed selection and the pending drag.
 *
 * The region travels as a sphere fit to the selected vertices (compact and
 * resolution-independent), never as a vertex list.
 */

export function sphereFit(
  positions: Float32Array,
  selection: number[],
  margin: number,
): { center: Vec3; radius: number } {
  if (selection.length === 0) {
    throw new Error("empty selection");
  }
  const c = [0, 0, 0];
  for (const v of selection) {
    c[0] += positions[3 * v];
    c[1] += positions[3 * v + 1];
    c[2] += positions[3 * v + 2];
  }
  c[0] /= selection.length;
  c[1] /= selection.length;
  c[2] /= selection.length;
  let r2 = 0;
  for (const v of selection) {
    const dx = positions[3 * v] - c[0];
    const dy = positions[3 * v + 1] - c[1];
    const dz = positions[3 * v + 2] - c[2];
    r2 = Math.max(r2, dx * dx + dy * dy + dz * dz);
  }
  return {
    center: c as Vec3,
    radius: Math.sqrt(r2) + margin,
  };
}

export function buildEditSpec(
  state: ViewState,
  positions: Float32Array,
  seed = 0,
): EditSpec {
  if (state.selection.length === 0) {
    throw new Error("nothing selected");
  }
  if (state.dragVector === null && state.normalOffset === null) {
    throw new Error("no displacement prescribed");
  }
  const region = sphereFit(positions, state.selection, 0.02);
  const displacement =
    state.dragVector !== null
      ? { kind: "vector" as const, value: state.dragVector }
      : { kind: "normal" as const, value: state.normalOffset as number };
  const spec: EditSpec = {
    targets: [
      {
        region: { type: "sphere", center: region.center, radius: region.radius },
        displacement,
      },
    ],
    fixed_region: {
      type: "not",
      part: { type: "sphere", center: region.center, radius: region.radius },
    },
    samples: { target: 100, fixed: 200 },
    lambda: state.lambda,
    splits: state.splits,
    mode: "split",
    constraints: state.constraints as ("volume" | "area")[],
    seed,
  };
  return spec;
}
