import type { IterationEvent, Vec3 } from "./types.js";

/** All UI state flows through one store fed by serializable events, so a
 * recorded event log replays to the same ViewState. */

export interface ViewState {
  sessionId: string | null;
  vertexCount: number;
  brushRadius: number;
  selection: number[];          // sorted vertex indices into the current mesh
  dragVector: Vec3 | null;      // pending world-space displacement
  normalOffset: number | null;  // pending scalar displacement along normals
  lambda: number;
  splits: number;
  constraints: string[];
  busy: boolean;
  feed: IterationEvent[];
  lastSnapshot: string | null;
  meshVersion: number;          // bumped whenever the mesh should be re-fetched
}

export type UiEvent =
  | { type: "sessionCreated"; sessionId: string; snapshot: string }
  | { type: "meshLoaded"; vertexCount: number }
  | { type: "brush"; vertices: number[] }
  | { type: "clearSelection" }
  | { type: "setBrushRadius"; radius: number }
  | { type: "setDrag"; vector: Vec3 }
  | { type: "setNormalOffset"; value: number }
  | { type: "setLambda"; value: number }
  | { type: "setSplits"; value: number }
  | { type: "toggleConstraint"; name: "volume" | "area" }
  | { type: "submit" }
  | { type: "iteration"; payload: IterationEvent }
  | { type: "done"; snapshot: string }
  | { type: "error"; message: string }
  | { type: "undone"; snapshot: string };

export function initialState(): ViewState {
  return {
    sessionId: null,
    vertexCount: 0,
    brushRadius: 0.15,
    selection: [],
    dragVector: null,
    normalOffset: null,
    lambda: 0.1,
    splits: 8,
    constraints: [],
    busy: false,
    feed: [],
    lastSnapshot: null,
    meshVersion: 0,
  };
}

export function reduce(state: ViewState, ev: UiEvent): ViewState {
  switch (ev.type) {
    case "sessionCreated":
      return { ...initialState(), sessionId: ev.sessionId, lastSnapshot: ev.snapshot };
    case "meshLoaded": {
      // selection must stay inside the current mesh
      const selection = state.selection.filter((v) => v < ev.vertexCount);
      return { ...state, vertexCount: ev.vertexCount, selection };
    }
    case "brush": {
      const merged = new Set(state.selection);
      for (const v of ev.vertices) {
        if (v >= 0 && v < state.vertexCount) merged.add(v);
      }
      return { ...state, selection: [...merged].sort((a, b) => a - b) };
    }
    case "clearSelection":
      return { ...state, selection: [], dragVector: null, normalOffset: null };
    case "setBrushRadius":
      return { ...state, brushRadius: ev.radius };
    case "setDrag":
      return { ...state, dragVector: ev.vector, normalOffset: null };
    case "setNormalOffset":
      return { ...state, normalOffset: ev.value, dragVector: null };
    case "setLambda":
      return { ...state, lambda: ev.value };
    case "setSplits":
      return { ...state, splits: ev.value };
    case "toggleConstraint": {
      const constraints = state.constraints.includes(ev.name)
        ? state.constraints.filter((c) => c !== ev.name)
        : [...state.constraints, ev.name];
      return { ...state, constraints };
    }
    case "submit":
      // the pending edit is handed off; clear it and open the feed
      return {
        ...state,
        busy: true,
        feed: [],
        selection: [],
        dragVector: null,
        normalOffset: null,
      };
    case "iteration":
      return {
        ...state,
        feed: [...state.feed, ev.payload],
        meshVersion: state.meshVersion + 1,
      };
    case "done":
      return {
        ...state,
        busy: false,
        lastSnapshot: ev.snapshot,
        meshVersion: state.meshVersion + 1,
      };
    case "error":
      return { ...state, busy: false };
    case "undone":
      return {
        ...state,
        lastSnapshot: ev.snapshot,
        meshVersion: state.meshVersion + 1,
        selection: [],
      };
    default:
      return state;
  }
}

export function replay(events: UiEvent[], from?: ViewState): ViewState {
  let state = from ?? initialState();
  for (const ev of events) state = reduce(state, ev);
  return state;
}

export class Store {
  state: ViewState = initialState();
  log: UiEvent[] = [];
  private listeners: Array<(s: ViewState, ev: UiEvent) => void> = [];

  dispatch(ev: UiEvent): ViewState {
    this.state = reduce(this.state, ev);
    this.log.push(ev);
    for (const fn of this.listeners) fn(this.state, ev);
    return this.state;
  }

  subscribe(fn: (s: ViewState, ev: UiEvent) => void): void {
    this.listeners.push(fn);
  }
}
