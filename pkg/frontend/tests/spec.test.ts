import { describe, expect, it } from "vitest";

import { EditSpecSchema } from "../src/schema.js";
import { buildEditSpec, sphereFit } from "../src/spec.js";
import { expandEvents, loadSessions, makeSphereLattice, runToSubmit } from "./helpers.js";

const positions = makeSphereLattice();

describe("spec construction", () => {
  it("every recorded session yields a schema-valid spec", () => {
    for (const session of loadSessions()) {
      const { atSubmit } = runToSubmit(expandEvents(session.events, positions));
      const spec = buildEditSpec(atSubmit, positions, 7);
      const parsed = EditSpecSchema.safeParse(spec);
      expect(parsed.success, `${session.name}: ${parsed.error}`).toBe(true);
    }
  });

  it("the sphere region covers every selected vertex", () => {
    for (const session of loadSessions()) {
      const { atSubmit } = runToSubmit(expandEvents(session.events, positions));
      const { center, radius } = sphereFit(positions, atSubmit.selection, 0.02);
      for (const v of atSubmit.selection) {
        const d = Math.hypot(
          positions[3 * v] - center[0],
          positions[3 * v + 1] - center[1],
          positions[3 * v + 2] - center[2],
        );
        expect(d).toBeLessThanOrEqual(radius + 1e-9);
      }
    }
  });

  it("constraint toggles land in the posted spec", () => {
    const volumeSession = loadSessions().find((s) => s.name === "volume-locked-push");
    const { atSubmit } = runToSubmit(expandEvents(volumeSession!.events, positions));
    const spec = buildEditSpec(atSubmit, positions);
    expect(spec.constraints).toEqual(["volume"]);

    const toggled = loadSessions().find((s) => s.name === "toggle-twice-area-once");
    const after = runToSubmit(expandEvents(toggled!.events, positions)).atSubmit;
    expect(buildEditSpec(after, positions).constraints).toEqual(["area"]);
  });

  it("lambda and splits controls flow through", () => {
    const session = loadSessions().find((s) => s.name === "side-normal-offset");
    const { atSubmit } = runToSubmit(expandEvents(session!.events, positions));
    const spec = buildEditSpec(atSubmit, positions);
    expect(spec.lambda).toBe(0.05);
    expect(spec.splits).toBe(4);
    expect(spec.targets[0].displacement).toEqual({ kind: "normal", value: -0.08 });
  });

  it("refuses empty selections and missing displacements", () => {
    const base = runToSubmit(
      expandEvents(loadSessions()[0].events, positions),
    ).atSubmit;
    expect(() => buildEditSpec({ ...base, selection: [] }, positions)).toThrow();
    expect(() =>
      buildEditSpec({ ...base, dragVector: null, normalOffset: null }, positions),
    ).toThrow();
  });
});

describe("mesh codec", () => {
  it("round-trips a synthetic mesh", async () => {
    const { encodeMesh, parseMesh } = await import("../src/mesh.js");
    const mesh = {
      positions: new Float32Array([0, 0, 0, 1, 0, 0, 0, 1, 0]),
      indices: new Uint32Array([0, 1, 2]),
      scalar: new Float32Array([0.5, -0.25, 1]),
    };
    const back = parseMesh(encodeMesh(mesh));
    expect([...back.positions]).toEqual([...mesh.positions]);
    expect([...back.indices]).toEqual([...mesh.indices]);
    expect([...back.scalar!]).toEqual([...mesh.scalar]);
    expect(() => parseMesh(new ArrayBuffer(32))).toThrow(/magic/);
  });
});
