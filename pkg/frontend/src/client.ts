/**
 * HTTP client for the needleguide control service.
 *
 * Thin fetch wrappers, one per endpoint, plus the /events subscription.
 * Every non-2xx response is raised as a ServiceError carrying the error
 * document verbatim so the UI can show exactly what the service said.
 */

import { sseJson } from "./sse.js";
import type {
  ErrorDoc,
  PlanRequest,
  PlanResponse,
  RegistrationResponse,
  ServiceEvent,
  StateDoc,
} from "./types.js";

export class ServiceError extends Error {
  readonly status: number;
  readonly doc: ErrorDoc;

  constructor(status: number, doc: ErrorDoc) {
    super(`${doc.error}: ${doc.message}`);
    this.name = "ServiceError";
    this.status = status;
    this.doc = doc;
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (res.ok) return (await res.json()) as T;
  let doc: ErrorDoc;
  try {
    doc = (await res.json()) as ErrorDoc;
  } catch {
    doc = { error: `HTTP ${res.status}`, message: res.statusText };
  }
  throw new ServiceError(res.status, doc);
}

export interface EventSubscription {
  /** Resolves when the stream ends, rejects if it drops with an error. */
  done: Promise<void>;
  close(): void;
}

export class ServiceClient {
  baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async state(): Promise<StateDoc> {
    return asJson(await fetch(`${this.baseUrl}/state`));
  }

  async register(pairs: { mr: number[]; robot: number[] }[]): Promise<RegistrationResponse> {
    return asJson(
      await fetch(`${this.baseUrl}/registration`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ pairs }),
      }),
    );
  }

  async plan(req: PlanRequest): Promise<PlanResponse> {
    return asJson(
      await fetch(`${this.baseUrl}/plan`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      }),
    );
  }

  async execute(planId: number): Promise<{ status: string; plan_id: number | null }> {
    return asJson(
      await fetch(`${this.baseUrl}/execute`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ plan_id: planId }),
      }),
    );
  }

  async abort(): Promise<{ status: string }> {
    return asJson(
      await fetch(`${this.baseUrl}/abort`, { method: "POST" }),
    );
  }

  /**
   * Subscribe to /events. onEvent fires for every decoded event in stream
   * order; close() tears the connection down without surfacing an error.
   */
  subscribe(onEvent: (ev: ServiceEvent) => void): EventSubscription {
    const ctrl = new AbortController();
    const done = (async () => {
      const res = await fetch(`${this.baseUrl}/events`, {
        headers: { accept: "text/event-stream" },
        signal: ctrl.signal,
      });
      if (!res.ok || res.body === null) {
        throw new ServiceError(res.status, {
          error: `HTTP ${res.status}`,
          message: "event stream unavailable",
        });
      }
      for await (const ev of sseJson<ServiceEvent>(res.body)) {
        onEvent(ev);
      }
    })().catch((err) => {
      if (ctrl.signal.aborted) return;
      throw err;
    });
    return { done, close: () => ctrl.abort() };
  }
}
