/** View state: a pure, server-derived projection.  Every mutation here is a
 * reducer over server responses or stream events; the client never edits
 * image data or invents state the server does not confirm. */

import type { ActionRecordDoc, LayerInfo, ServerEvent, SessionState } from "./api.js";
import type { ConsoleEntry } from "./console.js";

export const CONSOLE_LIMIT = 200;

export interface ViewState {
  sessionId: string | null;
  connected: boolean;
  server: SessionState | null;
  selected: string | null;
  zoom: number;
  consoleBuffer: ConsoleEntry[];
  proposal: ActionRecordDoc["action"][] | null;
  /** Scrub position; null means "live" (latest round). */
  timelineRound: number | null;
  warnings: string[];
  lastSeq: number;
}

export function initialViewState(): ViewState {
  return {
    sessionId: null,
    connected: false,
    server: null,
    selected: null,
    zoom: 1,
    consoleBuffer: [],
    proposal: null,
    timelineRound: null,
    warnings: [],
    lastSeq: 0,
  };
}

export function applyServerState(vs: ViewState, state: SessionState): ViewState {
  const selected = state.layers.some((l) => l.id === vs.selected)
    ? vs.selected
    : null;
  return { ...vs, sessionId: state.id, server: state, selected };
}

/** Layers ordered front-most first, hidden layers trailing. */
export function orderedLayers(state: SessionState): LayerInfo[] {
  const byId = new Map(state.layers.map((l) => [l.id, l]));
  const visible = state.stacking
    .map((id) => byId.get(id))
    .filter((l): l is LayerInfo => l !== undefined);
  const hidden = state.layers.filter((l) => !l.visible);
  return [...visible, ...hidden];
}

export function rounds(state: SessionState): number[] {
  return Array.from({ length: state.round + 1 }, (_, r) => r);
}

export function pushConsole(vs: ViewState, entry: ConsoleEntry): ViewState {
  const buffer = [...vs.consoleBuffer, entry].slice(-CONSOLE_LIMIT);
  return { ...vs, consoleBuffer: buffer };
}

export function applyEvent(vs: ViewState, ev: ServerEvent): ViewState {
  let next: ViewState = { ...vs, lastSeq: Math.max(vs.lastSeq, ev.seq) };
  switch (ev.event) {
    case "physics_generated": {
      const rec = ev.record;
      if (rec) {
        const text = `physics: ${rec.action.action} ${rec.action.object_id ?? ""} ${
          rec.action.delta_y !== undefined ? `by ${rec.action.delta_y}px` : ""
        }`.trim();
        next = pushConsole(next, { kind: "physics", text });
        next = { ...next, warnings: [...next.warnings, text].slice(-20) };
      }
      break;
    }
    case "action_rejected": {
      const rec = ev.record;
      if (rec) {
        next = pushConsole(next, {
          kind: "reject",
          text: `rejected: ${rec.action.action} (${rec.reason ?? "no reason"})`,
        });
      }
      break;
    }
    case "state_reset":
      next = pushConsole(next, {
        kind: "info",
        text: `state reset to round ${ev.round}`,
      });
      next = { ...next, timelineRound: null };
      break;
    default:
      break;
  }
  return next;
}

/** The round whose render the canvas should display. */
export function displayedRound(vs: ViewState): number | null {
  if (vs.timelineRound === null) return null; // live
  return vs.timelineRound;
}

/** How many groups to undo to return to `round`, per the server's ledger. */
export function undoCountTo(state: SessionState, round: number): number {
  return state.undo_counts[String(round)] ?? 0;
}

/** Drop-point in canvas pixel coordinates given element-space coordinates. */
export function toCanvasCoords(
  state: SessionState,
  elementX: number,
  elementY: number,
  elementWidth: number,
  elementHeight: number,
): { x: number; y: number } {
  const sx = state.canvas.width / elementWidth;
  const sy = state.canvas.height / elementHeight;
  return { x: Math.round(elementX * sx), y: Math.round(elementY * sy) };
}
