import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";
import { divergingColors } from "./colormap.js";
import type { MeshData, Vec3 } from "./types.js";

/** three.js scene hosting the shape, the brush highlight and the drag arrow. */

export class Viewer {
  renderer: THREE.WebGLRenderer;
  scene = new THREE.Scene();
  camera: THREE.PerspectiveCamera;
  controls: OrbitControls;
  mesh: THREE.Mesh | null = null;
  geometry: THREE.BufferGeometry | null = null;
  arrow: THREE.ArrowHelper | null = null;
  raycaster = new THREE.Raycaster();

  constructor(readonly canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(
      45,
      canvas.clientWidth / canvas.clientHeight,
      0.01,
      50,
    );
    this.camera.position.set(2.2, 1.6, 2.2);
    this.controls = new OrbitControls(this.camera, canvas);
    this.scene.background = new THREE.Color(0x101318);
    const key = new THREE.DirectionalLight(0xffffff, 2.2);
    key.position.set(3, 4, 2);
    this.scene.add(key);
    this.scene.add(new THREE.AmbientLight(0x667088, 1.2));
    const animate = () => {
      requestAnimationFrame(animate);
      this.controls.update();
      this.resize();
      this.renderer.render(this.scene, this.camera);
    };
    animate();
  }

  private resize() {
    const w = this.canvas.clientWidth;
    const h = this.canvas.clientHeight;
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.renderer.setSize(w, h, false);
      this.camera.aspect = w / h;
      this.camera.updateProjectionMatrix();
    }
  }

  setMesh(data: MeshData): void {
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.BufferAttribute(data.positions, 3));
    geo.setIndex(new THREE.BufferAttribute(data.indices, 1));
    geo.computeVertexNormals();
    const colors = data.scalar
      ? divergingColors(data.scalar)
      : this.neutralColors(data.positions.length / 3);
    geo.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    const mat = new THREE.MeshStandardMaterial({
      vertexColors: true,
      metalness: 0.05,
      roughness: 0.65,
    });
    if (this.mesh) {
      this.scene.remove(this.mesh);
      this.geometry?.dispose();
      (this.mesh.material as THREE.Material).dispose();
    }
    this.geometry = geo;
    this.mesh = new THREE.Mesh(geo, mat);
    this.scene.add(this.mesh);
  }

  private neutralColors(n: number): Float32Array {
    const c = new Float32Array(n * 3);
    c.fill(0.82);
    return c;
  }

  /** Vertex indices within `radius` of the picked surface point. */
  pick(ndcX: number, ndcY: number, radius: number): number[] {
    if (!this.mesh || !this.geometry) return [];
    this.raycaster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const hits = this.raycaster.intersectObject(this.mesh);
    if (hits.length === 0) return [];
    const hit = hits[0].point;
    const pos = this.geometry.getAttribute("position");
    const out: number[] = [];
    const r2 = radius * radius;
    for (let i = 0; i < pos.count; i++) {
      const dx = pos.getX(i) - hit.x;
      const dy = pos.getY(i) - hit.y;
      const dz = pos.getZ(i) - hit.z;
      if (dx * dx + dy * dy + dz * dz <= r2) out.push(i);
    }
    return out;
  }

  highlight(selection: number[]): void {
    if (!this.geometry) return;
    const n = this.geometry.getAttribute("position").count;
    const colors = this.neutralColors(n);
    for (const v of selection) {
      colors[3 * v] = 1.0;
      colors[3 * v + 1] = 0.55;
      colors[3 * v + 2] = 0.1;
    }
    this.geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
  }

  showArrow(origin: Vec3, vector: Vec3): void {
    this.clearArrow();
    const dir = new THREE.Vector3(...vector);
    const len = dir.length();
    if (len < 1e-9) return;
    this.arrow = new THREE.ArrowHelper(
      dir.clone().normalize(),
      new THREE.Vector3(...origin),
      len,
      0xffc24b,
      0.06,
      0.035,
    );
    this.scene.add(this.arrow);
  }

  clearArrow(): void {
    if (this.arrow) {
      this.scene.remove(this.arrow);
      this.arrow = null;
    }
  }

  selectionCentroid(selection: number[]): Vec3 | null {
    if (!this.geometry || selection.length === 0) return null;
    const pos = this.geometry.getAttribute("position");
    const c: Vec3 = [0, 0, 0];
    for (const v of selection) {
      c[0] += pos.getX(v);
      c[1] += pos.getY(v);
      c[2] += pos.getZ(v);
    }
    return c.map((x) => x / selection.length) as Vec3;
  }

  positionsArray(): Float32Array {
    if (!this.geometry) return new Float32Array();
    return this.geometry.getAttribute("position").array as Float32Array;
  }
}
