import type { MeshData } from "./types.js";

/** Binary mesh codec.
 *
 * Layout (little-endian): magic "FEMESH01", u32 flags (bit 0: per-vertex
 * scalar channel), u32 vertex count, u32 triangle count, f32 positions
 * (3 per vertex), u32 indices (3 per triangle), f32 scalars if flagged.
 */

export const MESH_MAGIC = "FEMESH01";

export function parseMesh(buffer: ArrayBuffer): MeshData {
  const magic = new TextDecoder().decode(new Uint8Array(buffer, 0, 8));
  if (magic !== MESH_MAGIC) {
    throw new Error(`bad mesh magic ${JSON.stringify(magic)}`);
  }
  const head = new DataView(buffer, 8, 12);
  const flags = head.getUint32(0, true);
  const nv = head.getUint32(4, true);
  const nt = head.getUint32(8, true);
  let off = 20;
  const positions = new Float32Array(buffer.slice(off, off + nv * 12));
  off += nv * 12;
  const indices = new Uint32Array(buffer.slice(off, off + nt * 12));
  off += nt * 12;
  let scalar: Float32Array | null = null;
  if (flags & 1) {
    scalar = new Float32Array(buffer.slice(off, off + nv * 4));
  }
  return { positions, indices, scalar };
}

export function encodeMesh(mesh: MeshData): ArrayBuffer {
  const nv = mesh.positions.length / 3;
  const nt = mesh.indices.length / 3;
  const flags = mesh.scalar ? 1 : 0;
  const size = 20 + nv * 12 + nt * 12 + (mesh.scalar ? nv * 4 : 0);
  const buf = new ArrayBuffer(size);
  new Uint8Array(buf, 0, 8).set(new TextEncoder().encode(MESH_MAGIC));
  const head = new DataView(buf, 8, 12);
  head.setUint32(0, flags, true);
  head.setUint32(4, nv, true);
  head.setUint32(8, nt, true);
  let off = 20;
  new Float32Array(buf, off, nv * 3).set(mesh.positions);
  off += nv * 12;
  new Uint32Array(buf, off, nt * 3).set(mesh.indices);
  off += nt * 12;
  if (mesh.scalar) {
    new Float32Array(buf, off, nv).set(mesh.scalar);
  }
  return buf;
}
