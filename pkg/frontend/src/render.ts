// Voxel scene: one InstancedMesh of unit cubes per part label, rebuilt
// whenever a newer grid arrives.  No meshing, no normals smoothing; the
// point is a faithful look at exactly what the physics scored.

import * as THREE from "three";
import type { DecodedGrid } from "./protocol";

const LABEL_COLORS: Record<number, number> = {
  1: 0x9aa7b0, // fuselage
  2: 0x4f8fd6, // wing
  3: 0xd6804f, // vertical tail
  4: 0x58b06b, // horizontal tail
  5: 0xd64f5e, // engine
};

export class VoxelScene {
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private meshes: THREE.InstancedMesh[] = [];
  private spin = 0;

  constructor(private canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(42, 1, 0.1, 2000);
    this.scene.background = new THREE.Color(0x10151b);
    const key = new THREE.DirectionalLight(0xffffff, 2.2);
    key.position.set(1, 2, 1.5);
    this.scene.add(key, new THREE.AmbientLight(0xffffff, 0.55));
    this.resize();
  }

  resize(): void {
    const w = this.canvas.clientWidth || 640;
    const h = this.canvas.clientHeight || 480;
    this.renderer.setSize(w, h, false);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  setGrid(grid: DecodedGrid): void {
    for (const mesh of this.meshes) {
      this.scene.remove(mesh);
      mesh.geometry.dispose();
      (mesh.material as THREE.Material).dispose();
    }
    this.meshes = [];

    const r = grid.resolution;
    const counts = new Map<number, number>();
    for (let i = 0; i < grid.labels.length; i++) {
      const l = grid.labels[i];
      if (l !== 0) counts.set(l, (counts.get(l) ?? 0) + 1);
    }
    const half = (r - 1) / 2;
    const box = new THREE.BoxGeometry(0.92, 0.92, 0.92);
    const m = new THREE.Matrix4();
    for (const [label, count] of counts) {
      const material = new THREE.MeshLambertMaterial({
        color: LABEL_COLORS[label] ?? 0xffffff,
      });
      const mesh = new THREE.InstancedMesh(box.clone(), material, count);
      let k = 0;
      for (let z = 0; z < r; z++) {
        for (let y = 0; y < r; y++) {
          const rowBase = r * y + r * r * z;
          for (let x = 0; x < r; x++) {
            if (grid.labels[rowBase + x] !== label) continue;
            // engine frame: x aft, y spanwise, z up -> scene x right,
            // z toward camera, y up
            m.makeTranslation(x - half, z - half, y - half);
            mesh.setMatrixAt(k++, m);
          }
        }
      }
      mesh.instanceMatrix.needsUpdate = true;
      this.scene.add(mesh);
      this.meshes.push(mesh);
    }
    const dist = r * 1.35;
    this.camera.position.set(dist * 0.8, dist * 0.45, dist * 0.8);
    this.camera.lookAt(0, 0, 0);
  }

  frame(dtMs: number): void {
    this.spin += dtMs * 0.00012;
    for (const mesh of this.meshes) {
      mesh.rotation.y = this.spin;
    }
    this.renderer.render(this.scene, this.camera);
  }
}
