import { ServiceClient, ServiceBusy, SpecRejected } from "./api.js";
import { buildEditSpec } from "./spec.js";
import { Store } from "./store.js";
import type { Vec3 } from "./types.js";
import { Viewer } from "./viewer.js";

/** Wires the store, the service client and the three.js viewer together. */

const MESH_RES = 56;
const REFRESH_MIN_MS = 100; // at most 10 mesh refreshes per second

const store = new Store();
const client = new ServiceClient("");
const canvas = document.getElementById("view") as HTMLCanvasElement;
const viewer = new Viewer(canvas);

const el = (id: string) => document.getElementById(id) as HTMLElement;
const statusEl = el("status");
const feedEl = el("feed");

function setStatus(text: string, bad = false) {
  statusEl.textContent = text;
  statusEl.className = bad ? "bad" : "";
}

let lastRefresh = 0;
let refreshQueued = false;

async function refreshMesh(force = false) {
  const sid = store.state.sessionId;
  if (!sid) return;
  const now = performance.now();
  if (!force && now - lastRefresh < REFRESH_MIN_MS) {
    if (!refreshQueued) {
      refreshQueued = true;
      setTimeout(() => {
        refreshQueued = false;
        void refreshMesh(true);
      }, REFRESH_MIN_MS);
    }
    return;
  }
  lastRefresh = now;
  try {
    const mesh = await client.mesh(sid, MESH_RES);
    viewer.setMesh(mesh);
    store.dispatch({ type: "meshLoaded", vertexCount: mesh.positions.length / 3 });
  } catch (e) {
    setStatus(`mesh load failed: ${(e as Error).message}`, true);
  }
}

async function boot() {
  try {
    const ckpt = await fetch("/app/sphere.json").then((r) =>
      r.ok ? r.json() : null,
    );
    const created = ckpt
      ? await client.createSession({ checkpoint: ckpt })
      : await client.createSession({ path: "sphere.json" });
    store.dispatch({
      type: "sessionCreated",
      sessionId: created.session,
      snapshot: created.snapshot,
    });
    await refreshMesh(true);
    setStatus(`session ${created.session}`);
  } catch (e) {
    setStatus(`no session: ${(e as Error).message}`, true);
  }
}

// -- brushing ----------------------------------------------------------------

let brushing = false;

canvas.addEventListener("pointerdown", (ev) => {
  if (!ev.shiftKey) return; // plain drag orbits the camera
  brushing = true;
  viewer.controls.enabled = false;
  brushAt(ev);
});
canvas.addEventListener("pointermove", (ev) => {
  if (brushing) brushAt(ev);
});
window.addEventListener("pointerup", () => {
  brushing = false;
  viewer.controls.enabled = true;
});

function brushAt(ev: PointerEvent) {
  const rect = canvas.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * 2 - 1;
  const y = -(((ev.clientY - rect.top) / rect.height) * 2 - 1);
  const verts = viewer.pick(x, y, store.state.brushRadius);
  if (verts.length) {
    store.dispatch({ type: "brush", vertices: verts });
    viewer.highlight(store.state.selection);
  }
}

// -- controls ------------------------------------------------------------------

function readVec(id: string): Vec3 {
  const parts = (el(id) as HTMLInputElement).value
    .split(",")
    .map((s) => parseFloat(s.trim()));
  if (parts.length !== 3 || parts.some((v) => !isFinite(v))) {
    throw new Error("displacement must be three numbers");
  }
  return parts as Vec3;
}

el("set-drag").addEventListener("click", () => {
  try {
    const v = readVec("drag-vector");
    store.dispatch({ type: "setDrag", vector: v });
    const c = viewer.selectionCentroid(store.state.selection);
    if (c) viewer.showArrow(c, v);
  } catch (e) {
    setStatus((e as Error).message, true);
  }
});

el("set-normal").addEventListener("click", () => {
  const v = parseFloat((el("normal-offset") as HTMLInputElement).value);
  if (!isFinite(v)) {
    setStatus("normal offset must be a number", true);
    return;
  }
  store.dispatch({ type: "setNormalOffset", value: v });
  viewer.clearArrow();
});

(el("lambda") as HTMLInputElement).addEventListener("change", (ev) => {
  store.dispatch({
    type: "setLambda",
    value: parseFloat((ev.target as HTMLInputElement).value) || 0.1,
  });
});
(el("splits") as HTMLInputElement).addEventListener("change", (ev) => {
  store.dispatch({
    type: "setSplits",
    value: parseInt((ev.target as HTMLInputElement).value, 10) || 8,
  });
});
(el("brush-radius") as HTMLInputElement).addEventListener("change", (ev) => {
  store.dispatch({
    type: "setBrushRadius",
    radius: parseFloat((ev.target as HTMLInputElement).value) || 0.15,
  });
});
for (const name of ["volume", "area"] as const) {
  el(`constraint-${name}`).addEventListener("change", () => {
    store.dispatch({ type: "toggleConstraint", name });
  });
}

el("clear").addEventListener("click", () => {
  store.dispatch({ type: "clearSelection" });
  viewer.highlight([]);
  viewer.clearArrow();
});

el("undo").addEventListener("click", async () => {
  const sid = store.state.sessionId;
  if (!sid) return;
  try {
    const r = await client.undo(sid);
    store.dispatch({ type: "undone", snapshot: r.snapshot });
    await refreshMesh(true);
    setStatus(r.undone ? "undone" : "nothing to undo");
  } catch (e) {
    setStatus(
      e instanceof ServiceBusy ? "edit in progress" : (e as Error).message,
      true,
    );
  }
});

el("submit").addEventListener("click", async () => {
  const sid = store.state.sessionId;
  if (!sid || store.state.busy) return;
  let spec;
  try {
    spec = buildEditSpec(store.state, viewer.positionsArray(), Date.now() % 100000);
  } catch (e) {
    setStatus((e as Error).message, true);
    return;
  }
  store.dispatch({ type: "submit" });
  viewer.highlight([]);
  viewer.clearArrow();
  feedEl.textContent = "";
  setStatus("editing ...");
  try {
    await client.edit(sid, spec, (ev) => {
      if (ev.event === "iteration") {
        store.dispatch({ type: "iteration", payload: ev });
        const res = (ev.residual as number | undefined)?.toExponential(2);
        feedEl.textContent =
          `iteration ${ev.iteration}  residual ${res ?? "-"}\n` +
          feedEl.textContent;
        void refreshMesh();
      } else if (ev.event === "done") {
        store.dispatch({ type: "done", snapshot: ev.snapshot as string });
      } else if (ev.event === "error") {
        store.dispatch({ type: "error", message: String(ev.message) });
        setStatus(`edit failed: ${ev.message}`, true);
      }
    });
    await refreshMesh(true);
    if (!statusEl.className) setStatus("done");
  } catch (e) {
    store.dispatch({ type: "error", message: (e as Error).message });
    setStatus(
      e instanceof ServiceBusy
        ? "edit in progress"
        : e instanceof SpecRejected
          ? `spec rejected: ${e.message}`
          : (e as Error).message,
      true,
    );
  }
});

const updateSubmit = () => {
  (el("submit") as HTMLButtonElement).disabled =
    store.state.busy ||
    store.state.selection.length === 0 ||
    (store.state.dragVector === null && store.state.normalOffset === null);
};
store.subscribe(updateSubmit);
updateSubmit();

void boot();
