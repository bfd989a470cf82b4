/** JSON wire types mirroring the service's edit-spec schema. */

export type Vec3 = [number, number, number];

export type Region =
  | { type: "everywhere" }
  | { type: "sphere"; center: Vec3; radius: number }
  | { type: "box"; lower: Vec3; upper: Vec3 }
  | { type: "halfspace"; normal: Vec3; offset: number }
  | { type: "all_of"; parts: Region[] }
  | { type: "any_of"; parts: Region[] }
  | { type: "not"; part: Region };

export type Displacement =
  | { kind: "vector"; value: Vec3 }
  | { kind: "normal"; value: number };

export interface EditSpec {
  targets: { region: Region; displacement: Displacement }[];
  fixed_region?: Region | null;
  samples?: { target: number; fixed?: number; constraint?: number };
  lambda: number;
  splits: number;
  mode?: "split" | "pursue";
  normal_filter?: number | null;
  constraints?: ("volume" | "area")[];
  mask?: "all" | "latent";
  seed?: number;
}

export interface MeshData {
  positions: Float32Array;
  indices: Uint32Array;
  scalar: Float32Array | null;
}

export interface IterationEvent {
  event: string;
  iteration?: number;
  residual?: number;
  remaining?: number | null;
  snapshot?: string;
  [key: string]: unknown;
}
