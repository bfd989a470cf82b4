import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { initialState, reduce, type UiEvent, type ViewState } from "../src/store.js";

const here = dirname(fileURLToPath(import.meta.url));

/** Fibonacci sphere lattice standing in for a served mesh. */
export function makeSphereLattice(n = 24): Float32Array {
  const count = n * n;
  const pos = new Float32Array(count * 3);
  const golden = Math.PI * (3 - Math.sqrt(5));
  for (let i = 0; i < count; i++) {
    const y = 1 - (2 * (i + 0.5)) / count;
    const r = Math.sqrt(Math.max(0, 1 - y * y));
    const phi = golden * i;
    pos[3 * i] = r * Math.cos(phi);
    pos[3 * i + 1] = y;
    pos[3 * i + 2] = r * Math.sin(phi);
  }
  return pos;
}

interface RecordedEvent {
  type: string;
  [key: string]: unknown;
}

export interface RecordedSession {
  name: string;
  events: RecordedEvent[];
}

export function loadSessions(): RecordedSession[] {
  const doc = JSON.parse(
    readFileSync(join(here, "fixtures", "sessions.json"), "utf8"),
  );
  return doc.sessions as RecordedSession[];
}

/** Expand fixture events against a mesh: brushCap selects lattice vertices
 * whose direction clears minDot with the axis, everything else passes
 * through as a plain store event. */
export function expandEvents(
  events: RecordedEvent[],
  positions: Float32Array,
): UiEvent[] {
  const out: UiEvent[] = [
    { type: "sessionCreated", sessionId: "replay", snapshot: "s0" },
    { type: "meshLoaded", vertexCount: positions.length / 3 },
  ];
  for (const ev of events) {
    if (ev.type === "brushCap") {
      const axis = ev.axis as [number, number, number];
      const minDot = ev.minDot as number;
      const verts: number[] = [];
      for (let i = 0; i < positions.length / 3; i++) {
        const x = positions[3 * i];
        const y = positions[3 * i + 1];
        const z = positions[3 * i + 2];
        const n = Math.hypot(x, y, z) || 1;
        const d = (x * axis[0] + y * axis[1] + z * axis[2]) / n;
        if (d >= minDot) verts.push(i);
      }
      out.push({ type: "brush", vertices: verts });
    } else {
      out.push(ev as UiEvent);
    }
  }
  return out;
}

/** Drive events through the store, capturing the state *at submit time*
 * (the reducer clears the pending edit on submit, like the app does). */
export function runToSubmit(
  events: UiEvent[],
): { atSubmit: ViewState; final: ViewState } {
  let state = initialState();
  let atSubmit: ViewState | null = null;
  for (const ev of events) {
    if (ev.type === "submit") atSubmit = state;
    state = reduce(state, ev);
  }
  if (!atSubmit) throw new Error("recorded session never submitted");
  return { atSubmit, final: state };
}
