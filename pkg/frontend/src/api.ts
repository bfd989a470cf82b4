import { parseMesh } from "./mesh.js";
import type { EditSpec, IterationEvent, MeshData } from "./types.js";

/** Thin client over the editing service; all shapes stay server-side. */

export class ServiceClient {
  constructor(readonly base: string = "") {}

  async createSession(body: { checkpoint?: unknown; path?: string }): Promise<{
    session: string;
    snapshot: string;
  }> {
    const r = await fetch(`${this.base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!r.ok) throw new Error(`session create failed: ${r.status}`);
    return r.json();
  }

  async mesh(session: string, res = 64): Promise<MeshData> {
    const r = await fetch(`${this.base}/sessions/${session}/mesh?res=${res}`);
    if (!r.ok) throw new Error(`mesh fetch failed: ${r.status}`);
    return parseMesh(await r.arrayBuffer());
  }

  async meshBytes(session: string, res = 64): Promise<ArrayBuffer> {
    const r = await fetch(`${this.base}/sessions/${session}/mesh?res=${res}`);
    if (!r.ok) throw new Error(`mesh fetch failed: ${r.status}`);
    return r.arrayBuffer();
  }

  async basis(session: string, p: number, res = 64): Promise<MeshData> {
    const r = await fetch(`${this.base}/sessions/${session}/basis/${p}?res=${res}`);
    if (!r.ok) throw new Error(`basis fetch failed: ${r.status}`);
    return parseMesh(await r.arrayBuffer());
  }

  async undo(session: string): Promise<{ undone: boolean; snapshot: string }> {
    const r = await fetch(`${this.base}/sessions/${session}/undo`, {
      method: "POST",
    });
    if (r.status === 409) throw new ServiceBusy();
    if (!r.ok) throw new Error(`undo failed: ${r.status}`);
    return r.json();
  }

  /** POST an edit and stream iteration events; resolves when done. */
  async edit(
    session: string,
    spec: EditSpec,
    onEvent: (ev: IterationEvent) => void,
    endpoint = "edit",
  ): Promise<void> {
    const r = await fetch(`${this.base}/sessions/${session}/${endpoint}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(spec),
    });
    if (r.status === 409) throw new ServiceBusy();
    if (r.status === 422) {
      throw new SpecRejected(JSON.stringify(await r.json()));
    }
    if (!r.ok || !r.body) throw new Error(`edit failed: ${r.status}`);
    const reader = r.body.getReader();
    const decoder = new TextDecoder();
    let tail = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      tail += decoder.decode(value, { stream: true });
      let nl;
      while ((nl = tail.indexOf("\n")) >= 0) {
        const line = tail.slice(0, nl).trim();
        tail = tail.slice(nl + 1);
        if (line) onEvent(JSON.parse(line) as IterationEvent);
      }
    }
    if (tail.trim()) onEvent(JSON.parse(tail) as IterationEvent);
  }
}

export class ServiceBusy extends Error {
  constructor() {
    super("edit in progress");
  }
}

export class SpecRejected extends Error {}
