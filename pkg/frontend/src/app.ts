/** DOM wiring: layer panel, server-rendered canvas, action console,
 * round timeline, planner proposals, and the physics warning feed. */

import { ApiError, StageApi } from "./api.js";
import type { ActionDoc, ServerEvent, SessionState } from "./api.js";
import { DslError, describeAction, parseDslLine } from "./console.js";
import type { ConsoleEntry } from "./console.js";
import { connectEvents } from "./events.js";
import type { StreamHandle } from "./events.js";
import {
  applyEvent,
  applyServerState,
  initialViewState,
  orderedLayers,
  pushConsole,
  toCanvasCoords,
  undoCountTo,
} from "./state.js";
import type { ViewState } from "./state.js";

export class App {
  private vs: ViewState = initialViewState();
  private stream: StreamHandle | null = null;
  private els: Record<string, HTMLElement> = {};

  constructor(
    private readonly root: HTMLElement,
    private readonly api: StageApi,
  ) {
    this.buildDom();
  }

  private el<T extends HTMLElement>(tag: string, cls: string, parent: HTMLElement): T {
    const node = document.createElement(tag) as T;
    node.className = cls;
    parent.appendChild(node);
    return node;
  }

  private buildDom(): void {
    this.root.innerHTML = "";
    const layout = this.el<HTMLDivElement>("div", "layout", this.root);

    const side = this.el<HTMLDivElement>("div", "side", layout);
    this.el<HTMLHeadingElement>("h2", "", side).textContent = "Layers";
    this.els.layers = this.el("div", "layers", side);
    this.el<HTMLHeadingElement>("h2", "", side).textContent = "Physics";
    this.els.warnings = this.el("div", "warnings", side);

    const center = this.el<HTMLDivElement>("div", "center", layout);
    this.els.status = this.el("div", "status", center);
    const canvasWrap = this.el<HTMLDivElement>("div", "canvas-wrap", center);
    const img = this.el<HTMLImageElement>("img", "canvas", canvasWrap);
    img.draggable = false;
    this.els.canvas = img;
    this.wireCanvasDrag(img);

    const timeline = this.el<HTMLDivElement>("div", "timeline", center);
    const scrub = this.el<HTMLInputElement>("input", "scrub", timeline);
    scrub.type = "range";
    scrub.min = "0";
    scrub.max = "0";
    scrub.addEventListener("input", () => this.onScrub(Number(scrub.value)));
    this.els.scrub = scrub;
    this.els.roundLabel = this.el("span", "round-label", timeline);
    const undoBtn = this.el<HTMLButtonElement>("button", "undo", timeline);
    undoBtn.textContent = "undo to here";
    undoBtn.addEventListener("click", () => void this.onUndoToScrub());
    this.els.undoBtn = undoBtn;

    const consoleBox = this.el<HTMLDivElement>("div", "console", center);
    this.els.consoleLog = this.el("div", "console-log", consoleBox);
    const input = this.el<HTMLInputElement>("input", "console-input", consoleBox);
    input.placeholder = "REMOVE pumpkin | MOVE lamp 420 310 | RESIZE moon 0.5";
    input.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter" && input.value.trim()) {
        void this.onConsoleSubmit(input.value);
        input.value = "";
      }
    });
    this.els.consoleInput = input;

    const planner = this.el<HTMLDivElement>("div", "planner", center);
    const planInput = this.el<HTMLInputElement>("input", "plan-input", planner);
    planInput.placeholder = "instruction, e.g. remove the pumpkin";
    const planBtn = this.el<HTMLButtonElement>("button", "", planner);
    planBtn.textContent = "Propose";
    planBtn.addEventListener("click", () => void this.onPlan(planInput.value));
    this.els.proposal = this.el("div", "proposal", planner);
  }

  async connect(bundle: string): Promise<void> {
    const state = await this.api.createSession(bundle);
    this.vs = applyServerState(this.vs, state);
    this.vs = pushConsole(this.vs, {
      kind: "info",
      text: `connected: ${bundle} (${state.layers.length} layers)`,
    });
    this.vs.connected = true;
    this.stream = connectEvents(
      this.api.eventsUrl(state.id),
      (ev) => this.onEvent(ev),
      () => void this.resync(),
    );
    this.renderAll();
  }

  disconnect(): void {
    this.stream?.stop();
    this.vs.connected = false;
  }

  /** Server is the source of truth: refetch state, then repaint. */
  private async resync(): Promise<void> {
    if (!this.vs.sessionId) return;
    try {
      const state = await this.api.state(this.vs.sessionId);
      this.vs = applyServerState(this.vs, state);
      this.renderAll();
    } catch {
      /* next reconnect retries */
    }
  }

  private onEvent(ev: ServerEvent): void {
    this.vs = applyEvent(this.vs, ev);
    if (ev.event === "round_complete" || ev.event === "state_reset" || ev.event === "hello") {
      void this.resync();
    } else {
      this.renderConsole();
      this.renderWarnings();
    }
  }

  private async onConsoleSubmit(line: string): Promise<void> {
    this.vs = pushConsole(this.vs, { kind: "input", text: `> ${line}` });
    this.renderConsole();
    let doc: ActionDoc;
    try {
      doc = parseDslLine(line);
    } catch (err) {
      const message = err instanceof DslError ? err.message : String(err);
      this.vs = pushConsole(this.vs, { kind: "error", text: message });
      this.renderConsole();
      return;
    }
    await this.submit([doc]);
  }

  private async submit(sequence: ActionDoc[]): Promise<void> {
    if (!this.vs.sessionId) return;
    try {
      const report = await this.api.submitActions(this.vs.sessionId, sequence);
      for (const rec of report.records) {
        if (rec.result === "rejected") {
          this.vs = pushConsole(this.vs, {
            kind: "reject",
            text: `rejected: ${describeAction(rec.action)} (${rec.reason ?? ""})`,
          });
        } else if (rec.provenance !== "physics") {
          this.vs = pushConsole(this.vs, {
            kind: "info",
            text: `applied: ${describeAction(rec.action)}`,
          });
        }
      }
      this.vs.timelineRound = null; // jump back to live after an edit
      await this.resync();
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err);
      this.vs = pushConsole(this.vs, { kind: "error", text: message });
      this.renderConsole();
    }
  }

  private async onPlan(instruction: string): Promise<void> {
    if (!this.vs.sessionId || !instruction.trim()) return;
    try {
      const reply = await this.api.plan(this.vs.sessionId, instruction);
      this.vs = { ...this.vs, proposal: reply.proposal.action_sequence };
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err);
      this.vs = pushConsole(this.vs, { kind: "error", text: `planner: ${message}` });
    }
    this.renderConsole();
    this.renderProposal();
  }

  private onScrub(round: number): void {
    if (!this.vs.server) return;
    this.vs.timelineRound = round >= this.vs.server.round ? null : round;
    this.renderCanvas();
    this.renderTimeline();
  }

  private async onUndoToScrub(): Promise<void> {
    const state = this.vs.server;
    if (!state || !this.vs.sessionId || this.vs.timelineRound === null) return;
    const k = undoCountTo(state, this.vs.timelineRound);
    if (k <= 0) return;
    try {
      const next = await this.api.undo(this.vs.sessionId, k);
      this.vs = applyServerState(this.vs, next);
      this.vs.timelineRound = null;
      this.renderAll();
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err);
      this.vs = pushConsole(this.vs, { kind: "error", text: message });
      this.renderConsole();
    }
  }

  private wireCanvasDrag(img: HTMLImageElement): void {
    let dragging = false;
    img.addEventListener("pointerdown", () => {
      dragging = this.vs.selected !== null && this.vs.timelineRound === null;
    });
    img.addEventListener("pointerup", (ev) => {
      if (!dragging || !this.vs.server || !this.vs.selected) return;
      dragging = false;
      const rect = img.getBoundingClientRect();
      const point = toCanvasCoords(
        this.vs.server,
        ev.clientX - rect.left,
        ev.clientY - rect.top,
        rect.width,
        rect.height,
      );
      // MOVE uses bbox-center semantics; the drop point is the new center.
      void this.submit([
        { action: "MOVE", object_id: this.vs.selected, x: point.x, y: point.y },
      ]);
    });
  }

  // -- rendering ---------------------------------------------------------

  private renderAll(): void {
    this.renderStatus();
    this.renderLayers();
    this.renderCanvas();
    this.renderTimeline();
    this.renderConsole();
    this.renderWarnings();
    this.renderProposal();
  }

  private renderStatus(): void {
    const state = this.vs.server;
    this.els.status.textContent = state
      ? `${state.bundle} - round ${state.round} - digest ${state.digest.slice(0, 12)}`
      : "disconnected";
  }

  private renderLayers(): void {
    const state = this.vs.server;
    const panel = this.els.layers;
    panel.innerHTML = "";
    if (!state) return;
    for (const layer of orderedLayers(state)) {
      const row = document.createElement("div");
      row.className = "layer-row" +
        (layer.id === this.vs.selected ? " selected" : "") +
        (layer.visible ? "" : " hidden-layer");
      const [x, y, w, h] = layer.bbox;
      row.textContent = `${layer.name} [D=${layer.depth_score}] (${x},${y} ${w}x${h})`;
      row.dataset.layerId = layer.id;
      row.addEventListener("click", () => {
        this.vs.selected = this.vs.selected === layer.id ? null : layer.id;
        this.renderLayers();
      });
      panel.appendChild(row);
    }
  }

  private renderCanvas(): void {
    const state = this.vs.server;
    if (!state || !this.vs.sessionId) return;
    const img = this.els.canvas as HTMLImageElement;
    const round = this.vs.timelineRound ?? undefined;
    img.src = this.api.renderUrl(this.vs.sessionId, round, state.digest);
    img.style.aspectRatio = `${state.canvas.width} / ${state.canvas.height}`;
  }

  private renderTimeline(): void {
    const state = this.vs.server;
    if (!state) return;
    const scrub = this.els.scrub as HTMLInputElement;
    scrub.max = String(state.round);
    const shown = this.vs.timelineRound ?? state.round;
    scrub.value = String(shown);
    scrub.disabled = state.round === 0;
    this.els.roundLabel.textContent =
      `round ${shown}/${state.round}` + (this.vs.timelineRound === null ? " (live)" : "");
    (this.els.undoBtn as HTMLButtonElement).disabled =
      this.vs.timelineRound === null || undoCountTo(state, shown) === 0;
  }

  private renderConsole(): void {
    const log = this.els.consoleLog;
    log.innerHTML = "";
    for (const entry of this.vs.consoleBuffer) {
      const line = document.createElement("div");
      line.className = `console-line ${entry.kind}`;
      line.textContent = entry.text;
      log.appendChild(line);
    }
    log.scrollTop = log.scrollHeight;
  }

  private renderWarnings(): void {
    const panel = this.els.warnings;
    panel.innerHTML = "";
    for (const warning of this.vs.warnings.slice(-8)) {
      const line = document.createElement("div");
      line.className = "warning";
      line.textContent = warning;
      panel.appendChild(line);
    }
  }

  private renderProposal(): void {
    const panel = this.els.proposal;
    panel.innerHTML = "";
    const proposal = this.vs.proposal;
    if (!proposal) return;
    const list = document.createElement("textarea");
    list.className = "proposal-json";
    list.value = JSON.stringify(proposal, null, 2);
    panel.appendChild(list);
    const run = document.createElement("button");
    run.textContent = "Run proposal";
    run.addEventListener("click", () => {
      try {
        const sequence = JSON.parse(list.value) as ActionDoc[];
        this.vs = { ...this.vs, proposal: null };
        void this.submit(sequence);
        this.renderProposal();
      } catch {
        this.vs = pushConsole(this.vs, {
          kind: "error",
          text: "proposal is not valid JSON",
        });
        this.renderConsole();
      }
    });
    panel.appendChild(run);
    const dismiss = document.createElement("button");
    dismiss.textContent = "Dismiss";
    dismiss.addEventListener("click", () => {
      this.vs = { ...this.vs, proposal: null };
      this.renderProposal();
    });
    panel.appendChild(dismiss);
  }

  /** Test hook: current view state snapshot. */
  get viewState(): ViewState {
    return this.vs;
  }
}

export type { ConsoleEntry, SessionState };
