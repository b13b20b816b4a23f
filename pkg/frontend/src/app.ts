/**
 * Four-column component workspace.
 *
 * Column 1: prompt entry and message history. Column 2: the monolithic
 * response (with a fallback banner when decomposition is unavailable).
 * Column 3: the component list with per-component include checkbox,
 * Manual Edit editor, and Reprompt control. Column 4: the recomposed
 * output.
 *
 * Column 4 never computes recomposition locally: after every acknowledged
 * event it re-fetches GET /recompose and displays the server's text. The
 * two mutation paths stay visually distinct: "Manual Edit" is an inline
 * save with no model call, "Reprompt" goes through the model and shows
 * the provenance of the replacement content.
 */

import {
  ApiError,
  ChangeEntry,
  ComponentPayload,
  DecomposedPayload,
  MaodApi,
  MessageResult,
  ModelSelection,
} from "./api.js";

interface HistoryEntry {
  role: "user" | "assistant";
  text: string;
}

interface ResponseState {
  responseId: string;
  monolithic: string;
  degraded: boolean;
  components: ComponentPayload[];
  provenance: Map<string, string>;
  badges: Map<string, string>;
}

export interface WorkspaceOptions {
  /** New users start in the simple two-pane view. */
  simpleView?: boolean;
  profile?: string;
  /** Model the session runs; the server defaults to the echo mock. */
  model?: ModelSelection;
}

export class Workspace {
  readonly root: HTMLElement;
  private readonly api: MaodApi;
  private readonly profile: string;
  private readonly model: ModelSelection | undefined;

  private sessionId: string | null = null;
  private history: HistoryEntry[] = [];
  private response: ResponseState | null = null;
  private simpleView: boolean;

  // One in-flight mutation per response; later actions wait their turn.
  private mutationChain: Promise<void> = Promise.resolve();

  private promptInput!: HTMLTextAreaElement;
  private historyList!: HTMLUListElement;
  private monolithicView!: HTMLPreElement;
  private degradedBanner!: HTMLDivElement;
  private componentList!: HTMLDivElement;
  private recomposedView!: HTMLPreElement;
  private emptyPlaceholder!: HTMLDivElement;
  private statusLine!: HTMLDivElement;

  constructor(root: HTMLElement, api: MaodApi, options: WorkspaceOptions = {}) {
    this.root = root;
    this.api = api;
    this.profile = options.profile ?? "document";
    this.model = options.model;
    this.simpleView = options.simpleView ?? true;
    this.buildLayout();
    this.applyViewMode();
  }

  // --- layout -----------------------------------------------------------

  private buildLayout(): void {
    this.root.innerHTML = "";
    this.root.classList.add("maod-workspace");

    const header = el("header", "workspace-header");
    const viewToggle = el("button", "view-toggle");
    viewToggle.id = "view-toggle";
    viewToggle.textContent = "Advanced view";
    viewToggle.addEventListener("click", () => this.toggleSimpleView());
    header.append(viewToggle);
    this.statusLine = el("div", "status-line");
    this.statusLine.id = "status-line";
    header.append(this.statusLine);
    this.root.append(header);

    const columns = el("main", "columns");

    const col1 = el("section", "column column-prompt");
    col1.id = "column1";
    col1.append(heading("Prompt"));
    this.historyList = el("ul", "history");
    col1.append(this.historyList);
    this.promptInput = el("textarea", "prompt-input");
    this.promptInput.id = "prompt-input";
    col1.append(this.promptInput);
    const send = el("button", "send-button");
    send.id = "send-button";
    send.textContent = "Send";
    send.addEventListener("click", () => void this.sendPrompt());
    col1.append(send);

    const col2 = el("section", "column column-monolithic");
    col2.id = "column2";
    col2.append(heading("Response"));
    this.degradedBanner = el("div", "degraded-banner");
    this.degradedBanner.id = "degraded-banner";
    this.degradedBanner.hidden = true;
    const bannerText = el("span", "degraded-text");
    bannerText.textContent = "decomposition unavailable";
    const retry = el("button", "retry-decompose");
    retry.id = "retry-decompose";
    retry.textContent = "Retry decomposition";
    retry.addEventListener("click", () => void this.retryDecomposition());
    this.degradedBanner.append(bannerText, retry);
    col2.append(this.degradedBanner);
    this.monolithicView = el("pre", "monolithic-view");
    this.monolithicView.id = "monolithic-view";
    col2.append(this.monolithicView);

    const col3 = el("section", "column column-components");
    col3.id = "column3";
    col3.append(heading("Components"));
    this.componentList = el("div", "component-list");
    this.componentList.id = "component-list";
    col3.append(this.componentList);

    const col4 = el("section", "column column-recomposed");
    col4.id = "column4";
    col4.append(heading("Composed output"));
    this.emptyPlaceholder = el("div", "empty-placeholder");
    this.emptyPlaceholder.id = "empty-placeholder";
    this.emptyPlaceholder.textContent = "empty output";
    this.emptyPlaceholder.hidden = true;
    col4.append(this.emptyPlaceholder);
    this.recomposedView = el("pre", "recomposed-view");
    this.recomposedView.id = "recomposed-view";
    col4.append(this.recomposedView);

    columns.append(col1, col2, col3, col4);
    this.root.append(columns);
  }

  // --- view mode --------------------------------------------------------

  isSimpleView(): boolean {
    return this.simpleView;
  }

  toggleSimpleView(): void {
    this.simpleView = !this.simpleView;
    this.applyViewMode();
  }

  private applyViewMode(): void {
    // Collapsing to the two-pane view only changes visibility; all state
    // (history, components, pending edits) survives the toggle.
    this.root.classList.toggle("simple-view", this.simpleView);
    const toggle = this.root.querySelector<HTMLButtonElement>("#view-toggle");
    if (toggle) {
      toggle.textContent = this.simpleView ? "Advanced view" : "Simple view";
    }
    for (const id of ["column2", "column3"]) {
      const column = this.root.querySelector<HTMLElement>(`#${id}`);
      if (column) {
        column.hidden = this.simpleView;
      }
    }
  }

  // --- prompt flow --------------------------------------------------------

  async sendPrompt(): Promise<void> {
    const prompt = this.promptInput.value;
    if (!prompt.trim()) {
      return;
    }
    try {
      const session = this.sessionId ?? (await this.api.createSession(this.model)).session_id;
      this.sessionId = session;
      const result = await this.api.postMessage(session, prompt, this.profile);
      this.history.push({ role: "user", text: prompt });
      this.history.push({ role: "assistant", text: result.monolithic });
      this.promptInput.value = "";
      await this.renderResponse(result);
      this.setStatus("");
    } catch (error) {
      this.reportError(error);
    }
  }

  /** Populate the columns from a message result. */
  async renderResponse(result: MessageResult): Promise<void> {
    this.response = {
      responseId: result.response_id,
      monolithic: result.monolithic,
      degraded: result.degraded,
      components: result.decomposed ? result.decomposed.components : [],
      provenance: new Map(),
      badges: new Map(),
    };
    this.renderHistory();
    this.monolithicView.textContent = result.monolithic;
    // Degraded responses keep columns 1-2 plus the fallback banner; the
    // component list stays empty and column 4 mirrors what the server
    // recomposes (the monolithic passthrough).
    this.degradedBanner.hidden = !result.degraded;
    this.renderComponents();
    await this.refreshRecomposed();
  }

  async retryDecomposition(): Promise<void> {
    if (!this.response) {
      return;
    }
    try {
      const upgraded = await this.api.redecompose(this.response.responseId);
      this.response.degraded = upgraded.degraded;
      this.response.components = upgraded.decomposed ? upgraded.decomposed.components : [];
      this.degradedBanner.hidden = !upgraded.degraded;
      this.renderComponents();
      await this.refreshRecomposed();
      this.setStatus("");
    } catch (error) {
      this.reportError(error);
    }
  }

  // --- column 3: component rows ---------------------------------------------

  private renderComponents(): void {
    this.componentList.innerHTML = "";
    if (!this.response) {
      return;
    }
    for (const component of this.response.components) {
      this.componentList.append(this.buildRow(component));
    }
  }

  private buildRow(component: ComponentPayload): HTMLDivElement {
    const row = el("div", "component-row");
    row.dataset.componentId = component.id;
    row.classList.toggle("excluded", !component.includes);

    const head = el("div", "component-head");
    const checkbox = document.createElement("input");
    checkbox.type = "checkbox";
    checkbox.className = "include-toggle";
    checkbox.checked = component.includes;
    checkbox.addEventListener("change", () =>
      this.enqueue(() => this.toggleFlow(component.id, checkbox.checked)),
    );
    const label = el("span", "component-type");
    label.textContent = component.type;
    const badge = el("span", "change-badge");
    badge.hidden = !this.response?.badges.has(component.id);
    badge.textContent = this.response?.badges.get(component.id) ?? "";
    head.append(checkbox, label, badge);

    const body = el("pre", "component-content");
    body.textContent = component.content;

    const provenance = el("div", "provenance");
    const note = this.response?.provenance.get(component.id);
    provenance.hidden = !note;
    provenance.textContent = note ?? "";

    const controls = el("div", "component-controls");
    const editButton = el("button", "manual-edit-button");
    editButton.textContent = "Manual Edit";
    const repromptButton = el("button", "reprompt-button");
    repromptButton.textContent = "Reprompt";
    repromptButton.classList.add("model-action"); // distinct from the inline path
    const instruction = document.createElement("input");
    instruction.type = "text";
    instruction.className = "reprompt-instruction";
    instruction.placeholder = "Reprompt instruction";
    controls.append(editButton, repromptButton, instruction);

    const editor = el("div", "edit-area");
    editor.hidden = true;
    const editorInput = document.createElement("textarea");
    editorInput.className = "edit-input";
    const save = el("button", "save-edit");
    save.textContent = "Save";
    editor.append(editorInput, save);

    editButton.addEventListener("click", () => {
      editor.hidden = false;
      editorInput.value = component.content;
    });
    save.addEventListener("click", () => {
      editor.hidden = true;
      this.enqueue(() => this.manualEditFlow(component.id, editorInput.value));
    });
    repromptButton.addEventListener("click", () =>
      this.enqueue(() => this.repromptFlow(component.id, instruction.value)),
    );

    row.append(head, body, provenance, controls, editor);
    return row;
  }

  // --- mutation flows ----------------------------------------------------------

  /** Serialize mutations: one in-flight request per response at a time. */
  enqueue(action: () => Promise<void>): Promise<void> {
    this.mutationChain = this.mutationChain.then(action, action);
    return this.mutationChain;
  }

  async manualEditFlow(componentId: string, content: string): Promise<void> {
    if (!this.response) {
      return;
    }
    try {
      const ack = await this.api.manualEdit(this.response.responseId, componentId, content);
      this.applyAck(componentId, { content: ack.content, changes: ack.changes });
      await this.refreshRecomposed();
      this.setStatus("");
    } catch (error) {
      this.reportError(error);
    }
  }

  async toggleFlow(componentId: string, includes: boolean): Promise<void> {
    if (!this.response) {
      return;
    }
    try {
      const ack = await this.api.toggle(this.response.responseId, componentId, includes);
      this.applyAck(componentId, { includes: ack.includes, changes: ack.changes });
      await this.refreshRecomposed();
      this.setStatus("");
    } catch (error) {
      this.reportError(error);
    }
  }

  async repromptFlow(componentId: string, instruction: string): Promise<void> {
    if (!this.response) {
      return;
    }
    try {
      const ack = await this.api.reprompt(this.response.responseId, componentId, instruction);
      this.response.provenance.set(componentId, `Reprompt: ${instruction || "(no instruction)"}`);
      this.applyAck(componentId, { content: ack.content, changes: ack.changes });
      await this.refreshRecomposed();
      this.setStatus("");
    } catch (error) {
      this.reportError(error);
    }
  }

  private applyAck(
    componentId: string,
    update: { content?: string | null; includes?: boolean | null; changes: ChangeEntry[] },
  ): void {
    if (!this.response) {
      return;
    }
    this.response.components = this.response.components.map((component) => {
      if (component.id !== componentId) {
        return component;
      }
      return {
        ...component,
        content: update.content ?? component.content,
        includes: update.includes ?? component.includes,
      };
    });
    this.response.badges = new Map(
      update.changes.map((change) => [change.component_id, change.change]),
    );
    this.renderComponents();
  }

  /** Column 4 displays exactly what the server recomposes; nothing local. */
  private async refreshRecomposed(): Promise<void> {
    if (!this.response) {
      return;
    }
    const artifact = await this.api.recompose(this.response.responseId);
    const empty = artifact.text === "" && !this.response.degraded;
    this.emptyPlaceholder.hidden = !empty;
    this.recomposedView.textContent = artifact.text;
  }

  // --- misc -----------------------------------------------------------------

  private renderHistory(): void {
    this.historyList.innerHTML = "";
    for (const entry of this.history) {
      const item = document.createElement("li");
      item.className = `history-${entry.role}`;
      item.textContent = entry.text;
      this.historyList.append(item);
    }
  }

  private setStatus(text: string): void {
    this.statusLine.textContent = text;
  }

  private reportError(error: unknown): void {
    if (error instanceof ApiError) {
      // Surface the machine-readable code verbatim.
      this.setStatus(`${error.code}: ${error.message}`);
    } else {
      this.setStatus(String(error));
    }
  }

  // Test hooks: read-only views of internal state.
  currentResponse(): ResponseState | null {
    return this.response;
  }

  promptDraft(): string {
    return this.promptInput.value;
  }

  recomposedText(): string {
    return this.recomposedView.textContent ?? "";
  }
}

function el<K extends keyof HTMLElementTagNameMap>(tag: K, className: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}

function heading(text: string): HTMLHeadingElement {
  const node = document.createElement("h2");
  node.textContent = text;
  return node;
}

export { MaodApi } from "./api.js";
export type { DecomposedPayload };
