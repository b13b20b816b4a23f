/**
 * Scripted stand-in for the maod service, implementing the documented REST
 * contract (sessions, messages, component events with acks, recompose,
 * redecompose, machine-readable error envelopes). The decompositions it
 * serves are byte-faithful copies of what the real engine produces for the
 * two fixture prompts.
 */

import type { ComponentPayload, DecomposedPayload } from "../src/api.js";

export const GOLDEN_PROMPT =
  "# Release notes\n\nThe cut went out on schedule.\n\n- faster startup\n- smaller bundle\n\n```python\nprint('hi')\n```\n";

export const EMAIL_PROMPT =
  "Subject: Project update\n\nHi team,\n\nWe shipped v1.2 today...\n";

function goldenComponents(): ComponentPayload[] {
  return [
    { id: "c1", type: "Heading", content: "# Release notes", meta: { level: "1" }, includes: true, links: [] },
    {
      id: "c2", type: "Paragraph", content: "The cut went out on schedule.",
      meta: { prefix: "\n\n" }, includes: true,
      links: [{ source: "c2", target: "c1", relation: "belongs_to" }],
    },
    {
      id: "c3", type: "List", content: "- faster startup\n- smaller bundle",
      meta: { style: "bullet", prefix: "\n\n" }, includes: true,
      links: [{ source: "c3", target: "c1", relation: "belongs_to" }],
    },
    {
      id: "c4", type: "Code", content: "```python\nprint('hi')\n```",
      meta: { prefix: "\n\n", suffix: "\n" }, includes: true,
      links: [{ source: "c4", target: "c1", relation: "belongs_to" }],
    },
  ];
}

function emailComponents(): ComponentPayload[] {
  return [
    { id: "c1", type: "Subject", content: "Project update", meta: { role: "subject", prefix: "Subject: " }, includes: true, links: [] },
    { id: "c2", type: "Greeting", content: "Hi team,", meta: { role: "greeting", prefix: "\n\n" }, includes: true, links: [] },
    {
      id: "c3", type: "Paragraph", content: "We shipped v1.2 today...",
      meta: { prefix: "\n\n", suffix: "\n" }, includes: true,
      links: [{ source: "c3", target: "c1", relation: "belongs_to" }],
    },
  ];
}

interface StoredResponse {
  responseId: string;
  monolithic: string;
  degraded: boolean;
  profile: string;
  model: string;
  components: ComponentPayload[] | null;
  lastEventId: number;
}

export class FakeServer {
  agentDown = false;
  inFlight = 0;
  maxInFlight = 0;
  private sessions = new Map<string, string>(); // session id -> model name
  private responses = new Map<string, StoredResponse>();
  private counter = 0;

  /** FetchLike implementation handed to the workspace under test. */
  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    this.inFlight += 1;
    this.maxInFlight = Math.max(this.maxInFlight, this.inFlight);
    try {
      // Let the event loop interleave, as a real network would.
      await Promise.resolve();
      return this.route(input, init);
    } finally {
      this.inFlight -= 1;
    }
  };

  private route(url: string, init?: RequestInit): Response {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : {};
    let match: RegExpMatchArray | null;

    if (method === "POST" && url.endsWith("/api/sessions")) {
      const sid = `s${++this.counter}`;
      this.sessions.set(sid, String(body.model_name ?? "echo-1"));
      return ok({ session_id: sid, params: { model_name: this.sessions.get(sid) } });
    }
    if ((match = url.match(/\/api\/sessions\/([^/]+)\/messages$/)) && method === "POST") {
      if (!this.sessions.has(match[1])) {
        return fail(404, "SessionNotFound", `no session ${match[1]}`);
      }
      return ok(
        this.createResponse(String(body.prompt), String(body.profile ?? "document"), this.sessions.get(match[1])!),
      );
    }
    if ((match = url.match(/\/api\/responses\/([^/]+)\/components\/([^/]+)\/toggle$/)) && method === "POST") {
      return this.applyEvent(match[1], match[2], { kind: "toggle", includes: Boolean(body.includes) });
    }
    if ((match = url.match(/\/api\/responses\/([^/]+)\/components\/([^/]+)\/reprompt$/)) && method === "POST") {
      return this.applyEvent(match[1], match[2], { kind: "reprompt_result", instruction: String(body.instruction ?? "") });
    }
    if ((match = url.match(/\/api\/responses\/([^/]+)\/components\/([^/]+)$/)) && method === "PATCH") {
      return this.applyEvent(match[1], match[2], { kind: "manual_edit", content: String(body.content) });
    }
    if ((match = url.match(/\/api\/responses\/([^/]+)\/recompose$/)) && method === "GET") {
      const record = this.responses.get(match[1]);
      if (!record) {
        return fail(404, "ResponseNotFound", `no response ${match[1]}`);
      }
      return ok(this.recompose(record));
    }
    if ((match = url.match(/\/api\/responses\/([^/]+)\/decompose$/)) && method === "POST") {
      const record = this.responses.get(match[1]);
      if (!record) {
        return fail(404, "ResponseNotFound", `no response ${match[1]}`);
      }
      if (!this.agentDown && record.components === null) {
        record.components = this.decompose(record.monolithic, record.profile);
        record.degraded = record.components === null;
      }
      return ok({
        response_id: record.responseId,
        decomposed: this.payloadFor(record),
        degraded: record.degraded,
      });
    }
    return fail(404, "ResponseNotFound", `no route ${method} ${url}`);
  }

  private decompose(prompt: string, profile: string): ComponentPayload[] | null {
    if (prompt === GOLDEN_PROMPT) {
      return goldenComponents();
    }
    if (prompt === EMAIL_PROMPT && profile === "email") {
      return emailComponents();
    }
    if (prompt.trim()) {
      return [
        {
          id: "c1", type: "Paragraph", content: prompt.replace(/\n+$/, ""),
          meta: prompt.endsWith("\n") ? { suffix: "\n" } : {}, includes: true, links: [],
        },
      ];
    }
    return null;
  }

  private createResponse(prompt: string, profile: string, model: string) {
    // Mock vendors: echo-* returns the prompt, rewrite-* prepends a marker.
    const monolithic = model.startsWith("rewrite") ? `[rewritten] ${prompt}` : prompt;
    const rid = `r${++this.counter}`;
    const components = this.agentDown ? null : this.decompose(monolithic, profile);
    const record: StoredResponse = {
      responseId: rid,
      monolithic,
      degraded: components === null,
      profile,
      model,
      components,
      lastEventId: 0,
    };
    this.responses.set(rid, record);
    return {
      response_id: rid,
      monolithic: record.monolithic,
      decomposed: this.payloadFor(record),
      degraded: record.degraded,
    };
  }

  private payloadFor(record: StoredResponse): DecomposedPayload | null {
    if (record.components === null) {
      return null;
    }
    return {
      response_id: record.responseId,
      source_text: record.monolithic,
      profile: record.profile,
      components: record.components.map((c) => ({ ...c, meta: { ...c.meta }, links: [...c.links] })),
    };
  }

  private applyEvent(
    rid: string,
    cid: string,
    event: { kind: string; content?: string; includes?: boolean; instruction?: string },
  ): Response {
    const record = this.responses.get(rid);
    if (!record) {
      return fail(404, "ResponseNotFound", `no response ${rid}`);
    }
    if (!record.components) {
      return fail(404, "UnknownComponent", "response is monolithic (degraded)");
    }
    const component = record.components.find((c) => c.id === cid);
    if (!component) {
      return fail(404, "UnknownComponent", `no component ${cid}`);
    }
    const beforeRender = this.renderMap(record);
    let content: string | null = null;
    let includes: boolean | null = null;
    if (event.kind === "toggle") {
      includes = Boolean(event.includes);
      component.includes = includes;
    } else if (event.kind === "manual_edit") {
      content = event.content ?? "";
      component.content = content;
    } else {
      // Reprompt runs the session's model: echo is identity, rewrite marks.
      content = record.model.startsWith("rewrite")
        ? `[rewritten] ${component.content}`
        : component.content;
      component.content = content;
    }
    record.lastEventId += 1;
    const afterRender = this.renderMap(record);
    const changes: { component_id: string; change: string }[] = [];
    for (const id of record.components.map((c) => c.id)) {
      const was = beforeRender.get(id);
      const now = afterRender.get(id);
      if (was !== undefined && now === undefined) {
        changes.push({ component_id: id, change: "excluded" });
      } else if (was === undefined && now !== undefined) {
        changes.push({ component_id: id, change: "included" });
      } else if (was !== now) {
        changes.push({ component_id: id, change: "edited" });
      }
    }
    return ok({
      event_id: record.lastEventId,
      kind: event.kind,
      component_id: cid,
      content,
      includes,
      changes,
    });
  }

  private renderMap(record: StoredResponse): Map<string, string> {
    const map = new Map<string, string>();
    for (const c of record.components ?? []) {
      if (c.includes) {
        map.set(c.id, (c.meta.prefix ?? "") + c.content + (c.meta.suffix ?? ""));
      }
    }
    return map;
  }

  recomposeById(rid: string): { text: string; included_ids: string[]; basis_event_id: number } {
    const record = this.responses.get(rid);
    if (!record) {
      throw new Error(`no response ${rid}`);
    }
    return this.recompose(record);
  }

  private recompose(record: StoredResponse) {
    if (!record.components) {
      return { text: record.monolithic, included_ids: [], basis_event_id: 0 };
    }
    const included = record.components.filter((c) => c.includes);
    let text = "";
    let previous: ComponentPayload | null = null;
    let gap = false;
    for (const component of record.components) {
      if (!component.includes) {
        gap = previous !== null;
        continue;
      }
      if (previous !== null && gap) {
        const separator = (previous.meta.suffix ?? "") + (component.meta.prefix ?? "");
        if (separator === "") {
          text += "\n\n";
        }
      }
      text += (component.meta.prefix ?? "") + component.content + (component.meta.suffix ?? "");
      previous = component;
      gap = false;
    }
    return {
      text,
      included_ids: included.map((c) => c.id),
      basis_event_id: record.lastEventId,
    };
  }
}

function ok(payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status: 200,
    headers: { "content-type": "application/json" },
  });
}

function fail(status: number, code: string, message: string): Response {
  return new Response(JSON.stringify({ error: { code, message } }), {
    status,
    headers: { "content-type": "application/json" },
  });
}
