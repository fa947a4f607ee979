/**
 * Planning canvas: top-down (x-y) and side (x-z) projections of the guide.
 *
 * Rendered as SVG so every element stays inspectable and drag handling is
 * ordinary DOM events. The drawing shows the carriage travel rectangles,
 * the reachable-extent outline, the entry/target markers, and the path
 * polyline the service returned for the current plan. All feasibility
 * decisions are the service's: the outline here is plotted directly from
 * the served config (travel spans, bearing planes, incline limit) for
 * orientation only, and the path is drawn exactly as received.
 */

import type { ConsoleModel, MarkerSet } from "../model.js";
import type { Vec3 } from "../types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const SCALE = 3; // px per mm
const X_MIN = -60;
const X_MAX = 60;
const Y_MIN = -30;
const Y_MAX = 30;
const Z_MIN = -175;
const Z_MAX = 15;

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number> = {},
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, String(v));
  return node;
}

type Projection = "top" | "side";
type MarkerId = "entry" | "target";

export interface CanvasCallbacks {
  /** Fired on every drag movement with the updated marker set. */
  onMarkersChanged: (markers: MarkerSet) => void;
}

export class PlanningCanvas {
  readonly root: HTMLElement;
  private model: ConsoleModel;
  private callbacks: CanvasCallbacks;
  private topSvg: SVGSVGElement;
  private sideSvg: SVGSVGElement;
  private staticDrawn = false;
  private markers: Record<Projection, Record<MarkerId, SVGCircleElement>>;
  private paths: Record<Projection, SVGPolylineElement>;
  private extentOutline: SVGRectElement;
  private inclineEl: HTMLElement;
  private frameSel: HTMLSelectElement;
  private drag: { proj: Projection; id: MarkerId } | null = null;

  constructor(model: ConsoleModel, callbacks: CanvasCallbacks) {
    this.model = model;
    this.callbacks = callbacks;
    this.root = document.createElement("section");
    this.root.className = "panel canvas-panel";
    const h = document.createElement("h2");
    h.textContent = "Planning";
    this.root.appendChild(h);

    const frameRow = document.createElement("div");
    frameRow.className = "frame-row";
    const frameLabel = document.createElement("label");
    frameLabel.textContent = "frame ";
    this.frameSel = document.createElement("select");
    this.frameSel.className = "frame-select";
    for (const f of ["robot", "mr"]) {
      const opt = document.createElement("option");
      opt.value = f;
      opt.textContent = f;
      this.frameSel.appendChild(opt);
    }
    this.frameSel.value = model.markers.frame;
    this.frameSel.addEventListener("change", () => {
      this.emitMarkers({
        ...this.model.markers,
        frame: this.frameSel.value as MarkerSet["frame"],
      });
    });
    frameLabel.appendChild(this.frameSel);
    frameRow.appendChild(frameLabel);

    this.inclineEl = document.createElement("span");
    this.inclineEl.className = "incline-readout";
    this.inclineEl.textContent = "incline: --";
    frameRow.appendChild(this.inclineEl);
    this.root.appendChild(frameRow);

    this.topSvg = svgEl("svg", {
      class: "view-top",
      width: (X_MAX - X_MIN) * SCALE,
      height: (Y_MAX - Y_MIN) * SCALE,
      viewBox: `0 0 ${(X_MAX - X_MIN) * SCALE} ${(Y_MAX - Y_MIN) * SCALE}`,
    });
    this.sideSvg = svgEl("svg", {
      class: "view-side",
      width: (X_MAX - X_MIN) * SCALE,
      height: (Z_MAX - Z_MIN) * SCALE,
      viewBox: `0 0 ${(X_MAX - X_MIN) * SCALE} ${(Z_MAX - Z_MIN) * SCALE}`,
    });

    const topCaption = document.createElement("div");
    topCaption.className = "view-caption";
    topCaption.textContent = "top view (x-y)";
    const sideCaption = document.createElement("div");
    sideCaption.className = "view-caption";
    sideCaption.textContent = "side view (x-z)";
    this.root.appendChild(topCaption);
    this.root.appendChild(this.topSvg);
    this.root.appendChild(sideCaption);
    this.root.appendChild(this.sideSvg);

    this.extentOutline = svgEl("rect", { class: "extent-outline", fill: "none" });
    this.paths = {
      top: svgEl("polyline", { class: "plan-path", fill: "none" }),
      side: svgEl("polyline", { class: "plan-path", fill: "none" }),
    };
    this.markers = {
      top: { entry: this.makeMarker("entry"), target: this.makeMarker("target") },
      side: { entry: this.makeMarker("entry"), target: this.makeMarker("target") },
    };

    for (const proj of ["top", "side"] as Projection[]) {
      const svg = proj === "top" ? this.topSvg : this.sideSvg;
      for (const id of ["entry", "target"] as MarkerId[]) {
        const circle = this.markers[proj][id];
        circle.addEventListener("mousedown", (ev) => {
          ev.preventDefault();
          this.drag = { proj, id };
        });
      }
      svg.addEventListener("mousemove", (ev) => this.onMove(proj, ev as MouseEvent));
      svg.addEventListener("mouseup", () => {
        this.drag = null;
      });
    }

    model.onChange(() => this.refresh());
    this.refresh();
  }

  private makeMarker(id: MarkerId): SVGCircleElement {
    return svgEl("circle", { class: `marker marker-${id}`, r: 6 }) as SVGCircleElement;
  }

  // -- coordinate transforms ------------------------------------------------

  private toTop(x: number, y: number): [number, number] {
    return [(x - X_MIN) * SCALE, (Y_MAX - y) * SCALE];
  }

  private toSide(x: number, z: number): [number, number] {
    return [(x - X_MIN) * SCALE, (Z_MAX - z) * SCALE];
  }

  private fromClient(proj: Projection, ev: MouseEvent): [number, number] {
    const svg = proj === "top" ? this.topSvg : this.sideSvg;
    const rect = svg.getBoundingClientRect();
    // headless DOMs report zero-size rects; the width attribute is the
    // drawing's own pixel width so client coords map one to one then
    const w = rect.width || Number(svg.getAttribute("width")) || 0;
    const scale = w > 0 ? ((X_MAX - X_MIN) * SCALE) / w : 1;
    const px = (ev.clientX - rect.left) * scale;
    const py = (ev.clientY - rect.top) * scale;
    const x = px / SCALE + X_MIN;
    const second = proj === "top" ? Y_MAX - py / SCALE : Z_MAX - py / SCALE;
    return [x, second];
  }

  // -- dragging -------------------------------------------------------------

  private onMove(proj: Projection, ev: MouseEvent): void {
    if (!this.drag || this.drag.proj !== proj) return;
    const [x, second] = this.fromClient(proj, ev);
    const markers: MarkerSet = {
      entry: [...this.model.markers.entry] as Vec3,
      target: [...this.model.markers.target] as Vec3,
      frame: this.model.markers.frame,
    };
    const point = this.drag.id === "entry" ? markers.entry : markers.target;
    point[0] = x;
    if (proj === "top") {
      point[1] = second;
    } else {
      point[2] = second;
      // keep the line pointing downward; equal heights have no direction
      if (this.drag.id === "entry") {
        point[2] = Math.max(point[2], markers.target[2] + 5);
      } else {
        point[2] = Math.min(point[2], markers.entry[2] - 5);
      }
    }
    this.emitMarkers(markers);
  }

  private emitMarkers(markers: MarkerSet): void {
    this.callbacks.onMarkersChanged(markers);
  }

  // -- drawing --------------------------------------------------------------

  private drawStatic(): void {
    const cfg = this.model.config;
    if (!cfg || this.staticDrawn) return;
    this.staticDrawn = true;
    const hx = cfg.travel_x_mm / 2;
    const hy = cfg.travel_y_mm / 2;
    const zU = cfg.z_u_mm;
    const zL = cfg.z_l_mm;
    const slope = Math.tan((cfg.max_incline_deg * Math.PI) / 180);

    // top view: both carriages share the same travel rectangle footprint
    const [tx, ty] = this.toTop(-hx, hy);
    this.topSvg.appendChild(
      svgEl("rect", {
        class: "travel-rect",
        x: tx,
        y: ty,
        width: 2 * hx * SCALE,
        height: 2 * hy * SCALE,
        fill: "none",
      }),
    );
    this.topSvg.appendChild(this.extentOutline);

    // side view: travel band edges at each bearing plane
    for (const z of [zU, zL]) {
      const [x1, y1] = this.toSide(-hx, z);
      const [x2] = this.toSide(hx, z);
      this.sideSvg.appendChild(
        svgEl("line", { class: "travel-rect", x1, y1, x2, y2: y1 }),
      );
    }

    // reachable silhouette: the incline limit binds before opposed travel
    // (span * tan(limit) < travel), so the outline opens from the travel
    // rim at exactly the served incline limit, below the lower bearing and
    // above the upper one
    const sil = (sign: number): string => {
      const pts: [number, number][] = [
        [sign * (hx + (Z_MAX - zU) * slope), Z_MAX],
        [sign * hx, zU],
        [sign * hx, zL],
        [sign * (hx + (zL - Z_MIN) * slope), Z_MIN],
      ];
      return pts.map(([x, z]) => this.toSide(x, z).join(",")).join(" ");
    };
    for (const sign of [-1, 1]) {
      this.sideSvg.appendChild(
        svgEl("polyline", { class: "frustum-outline", points: sil(sign), fill: "none" }),
      );
    }

    for (const proj of ["top", "side"] as Projection[]) {
      const svg = proj === "top" ? this.topSvg : this.sideSvg;
      svg.appendChild(this.paths[proj]);
      svg.appendChild(this.markers[proj].entry);
      svg.appendChild(this.markers[proj].target);
    }
  }

  private refresh(): void {
    this.drawStatic();
    const model = this.model;

    // while a drag's plan request is in flight the markers follow the
    // pointer; once the service answers they snap to its robot-frame echo
    let entry: Vec3;
    let target: Vec3;
    if (model.plan && !model.planPending) {
      entry = model.plan.entry_robot_mm;
      target = model.plan.target_robot_mm;
    } else {
      entry = model.markers.entry;
      target = model.markers.target;
    }

    this.placeMarker("top", "entry", ...this.toTop(entry[0], entry[1]));
    this.placeMarker("top", "target", ...this.toTop(target[0], target[1]));
    this.placeMarker("side", "entry", ...this.toSide(entry[0], entry[2]));
    this.placeMarker("side", "target", ...this.toSide(target[0], target[2]));

    if (model.plan) {
      const pts = model.plan.path_mm;
      this.paths.top.setAttribute(
        "points",
        pts.map((p) => this.toTop(p[0], p[1]).join(",")).join(" "),
      );
      this.paths.side.setAttribute(
        "points",
        pts.map((p) => this.toSide(p[0], p[2]).join(",")).join(" "),
      );
    } else {
      this.paths.top.setAttribute("points", "");
      this.paths.side.setAttribute("points", "");
    }

    if (model.config) {
      // extent outline at the target depth: travel rectangle swept by the
      // incline-limited lateral reach, drawn as the exact rounded rectangle
      const cfg = model.config;
      const depth = Math.max(0, cfg.z_l_mm - target[2]);
      const reach = depth * Math.tan((cfg.max_incline_deg * Math.PI) / 180);
      const hx = cfg.travel_x_mm / 2 + reach;
      const hy = cfg.travel_y_mm / 2 + reach;
      const [ex, ey] = this.toTop(-hx, hy);
      this.extentOutline.setAttribute("x", String(ex));
      this.extentOutline.setAttribute("y", String(ey));
      this.extentOutline.setAttribute("width", String(2 * hx * SCALE));
      this.extentOutline.setAttribute("height", String(2 * hy * SCALE));
      this.extentOutline.setAttribute("rx", String(reach * SCALE));
    }

    const { value, over } = model.inclineReadout();
    this.inclineEl.textContent =
      value !== null ? `incline: ${value.toFixed(2)} deg` : "incline: --";
    this.inclineEl.classList.toggle("over", over);
    if (this.frameSel.value !== model.markers.frame) {
      this.frameSel.value = model.markers.frame;
    }
  }

  private placeMarker(proj: Projection, id: MarkerId, cx: number, cy: number): void {
    const c = this.markers[proj][id];
    c.setAttribute("cx", String(cx));
    c.setAttribute("cy", String(cy));
  }
}
