/**
 * Operator console wiring.
 *
 * Builds the page, owns the ServiceClient and the event subscription, and
 * routes user actions to the service. The only configuration is the
 * service URL field. Plan requests from marker drags are coalesced
 * latest-wins: at most one in flight, stale responses dropped.
 */

import { ServiceClient, ServiceError } from "./client.js";
import { ConsoleModel, type MarkerSet } from "./model.js";
import { PlanningCanvas } from "./view/canvas.js";
import { BannerBar, ExecutionDashboard, RegistrationPanel } from "./view/panels.js";

export class Console {
  readonly root: HTMLElement;
  readonly model: ConsoleModel;
  client: ServiceClient | null = null;

  private urlInput: HTMLInputElement;
  private connectBtn: HTMLButtonElement;
  private statusEl: HTMLElement;
  private subscription: { done: Promise<void>; close(): void } | null = null;
  private planSeq = 0;
  private planInFlight = false;
  private queuedMarkers: MarkerSet | null = null;

  constructor(defaultUrl = "http://127.0.0.1:8040") {
    this.model = new ConsoleModel();
    this.root = document.createElement("div");
    this.root.className = "console";

    const header = document.createElement("header");
    const title = document.createElement("h1");
    title.textContent = "needle guide console";
    header.appendChild(title);

    this.urlInput = document.createElement("input");
    this.urlInput.className = "service-url";
    this.urlInput.value = defaultUrl;
    this.urlInput.setAttribute("aria-label", "service url");
    header.appendChild(this.urlInput);

    this.connectBtn = document.createElement("button");
    this.connectBtn.className = "connect-btn";
    this.connectBtn.textContent = "Connect";
    this.connectBtn.addEventListener("click", () => void this.connect());
    header.appendChild(this.connectBtn);

    this.statusEl = document.createElement("span");
    this.statusEl.className = "connection-state";
    header.appendChild(this.statusEl);
    this.root.appendChild(header);

    const banner = new BannerBar(this.model);
    this.root.appendChild(banner.root);

    const columns = document.createElement("div");
    columns.className = "columns";
    const registration = new RegistrationPanel(this.model, {
      onRegister: (pairs) => void this.register(pairs),
    });
    const canvas = new PlanningCanvas(this.model, {
      onMarkersChanged: (markers) => this.requestPlan(markers),
    });
    const dashboard = new ExecutionDashboard(this.model, {
      onExecute: () => void this.execute(),
      onAbort: () => void this.abort(),
    });
    columns.appendChild(registration.root);
    columns.appendChild(canvas.root);
    columns.appendChild(dashboard.root);
    this.root.appendChild(columns);

    this.model.onChange(() => {
      this.statusEl.textContent = this.model.connection;
      this.statusEl.dataset.state = this.model.connection;
    });
  }

  // -- connection -----------------------------------------------------------

  async connect(): Promise<void> {
    this.subscription?.close();
    this.client = new ServiceClient(this.urlInput.value);
    this.model.setConnection("connecting");
    try {
      const state = await this.client.state();
      this.model.applyState(state);
    } catch (err) {
      this.model.setConnection("lost");
      this.model.setBanner(String(err));
      return;
    }
    this.subscription = this.client.subscribe((ev) => this.model.applyEvent(ev));
    this.model.setConnection("live");
    this.subscription.done
      .then(() => this.model.setConnection("lost"))
      .catch((err) => {
        this.model.setConnection("lost");
        this.model.setBanner(String(err));
      });
  }

  disconnect(): void {
    this.subscription?.close();
    this.subscription = null;
    this.model.setConnection("disconnected");
  }

  // -- actions --------------------------------------------------------------

  private async register(pairs: { mr: number[]; robot: number[] }[]): Promise<void> {
    if (!this.client) return;
    try {
      const res = await this.client.register(pairs);
      this.model.setRegistration(res.rms_residual_mm, res.residuals_mm.length);
      // once a registration exists, plan in scanner coordinates
      if (this.model.markers.frame !== "mr") {
        this.requestPlan({ ...this.model.markers, frame: "mr" });
      }
    } catch (err) {
      this.model.setBanner(String(err));
    }
  }

  /**
   * Live re-plan for a marker drag. Keeps exactly one POST /plan running;
   * the newest marker set wins and answers to older requests are ignored.
   */
  requestPlan(markers: MarkerSet): void {
    this.model.setMarkers(markers);
    if (!this.client) return;
    if (this.planInFlight) {
      this.queuedMarkers = markers;
      return;
    }
    void this.planNow(markers);
  }

  private async planNow(markers: MarkerSet): Promise<void> {
    if (!this.client) return;
    this.planInFlight = true;
    const seq = ++this.planSeq;
    this.model.planRequested();
    try {
      const plan = await this.client.plan({
        entry_mm: markers.entry,
        target_mm: markers.target,
        frame: markers.frame,
      });
      if (seq === this.planSeq) this.model.setPlan(plan);
    } catch (err) {
      if (seq === this.planSeq) {
        if (err instanceof ServiceError) {
          this.model.setPlanError({
            error: err.doc.error,
            message: err.doc.message,
            inclineDeg: err.doc.incline_deg,
          });
        } else {
          this.model.setPlanError({ error: "RequestFailed", message: String(err) });
        }
      }
    } finally {
      this.planInFlight = false;
      if (this.queuedMarkers) {
        const next = this.queuedMarkers;
        this.queuedMarkers = null;
        void this.planNow(next);
      }
    }
  }

  private async execute(): Promise<void> {
    if (!this.client || !this.model.plan) return;
    this.model.executeRequested();
    try {
      await this.client.execute(this.model.plan.plan_id);
    } catch (err) {
      // surfaced verbatim; the operator decides whether to try again
      this.model.executeFailed(String(err));
    }
  }

  private async abort(): Promise<void> {
    if (!this.client) return;
    try {
      await this.client.abort();
    } catch (err) {
      this.model.setBanner(String(err));
    }
  }
}

/** Mount the console onto a host element (the browser entry point). */
export function mountConsole(host: HTMLElement, defaultUrl?: string): Console {
  const app = new Console(defaultUrl);
  host.appendChild(app.root);
  return app;
}
