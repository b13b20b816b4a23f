/**
 * Typed client for the maod REST API. The UI talks to the service through
 * this module and nothing else; no private endpoints, no local shortcuts.
 */

export interface ComponentLink {
  source: string;
  target: string;
  relation: string;
}

export interface ComponentPayload {
  id: string;
  type: string;
  content: string;
  meta: Record<string, string>;
  includes: boolean;
  links: ComponentLink[];
}

export interface DecomposedPayload {
  response_id: string;
  source_text: string;
  profile: string;
  components: ComponentPayload[];
}

export interface MessageResult {
  response_id: string;
  monolithic: string;
  decomposed: DecomposedPayload | null;
  degraded: boolean;
}

export interface ChangeEntry {
  component_id: string;
  change: "edited" | "excluded" | "included";
}

export interface EventAck {
  event_id: number;
  kind: string;
  component_id: string;
  content: string | null;
  includes: boolean | null;
  changes: ChangeEntry[];
}

export interface RecomposeResult {
  text: string;
  included_ids: string[];
  basis_event_id: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

/** Server-reported failure; carries the machine-readable error code. */
export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
    this.code = body.code;
    this.status = status;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Model parameters selected for a session (vendor-standard form). */
export interface ModelSelection {
  vendor_id: string;
  model_name: string;
  temperature?: number;
}

export class MaodApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const payload = await response.json();
    if (!response.ok) {
      const error = (payload && payload.error) || { code: "UnknownError", message: "no details" };
      throw new ApiError(response.status, error);
    }
    return payload as T;
  }

  createSession(model?: ModelSelection): Promise<{ session_id: string }> {
    const body = model
      ? { vendor_id: model.vendor_id, model_name: model.model_name, temperature: model.temperature ?? 0 }
      : {};
    return this.request("POST", "/api/sessions", body);
  }

  postMessage(sessionId: string, prompt: string, profile = "document"): Promise<MessageResult> {
    return this.request("POST", `/api/sessions/${sessionId}/messages`, { prompt, profile });
  }

  manualEdit(responseId: string, componentId: string, content: string): Promise<EventAck> {
    return this.request("PATCH", `/api/responses/${responseId}/components/${componentId}`, { content });
  }

  toggle(responseId: string, componentId: string, includes: boolean): Promise<EventAck> {
    return this.request("POST", `/api/responses/${responseId}/components/${componentId}/toggle`, { includes });
  }

  reprompt(responseId: string, componentId: string, instruction: string): Promise<EventAck> {
    return this.request("POST", `/api/responses/${responseId}/components/${componentId}/reprompt`, { instruction });
  }

  recompose(responseId: string): Promise<RecomposeResult> {
    return this.request("GET", `/api/responses/${responseId}/recompose`);
  }

  redecompose(responseId: string): Promise<{ response_id: string; decomposed: DecomposedPayload | null; degraded: boolean }> {
    return this.request("POST", `/api/responses/${responseId}/decompose`, {});
  }
}
