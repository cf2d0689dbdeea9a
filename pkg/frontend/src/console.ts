/** Console command line: the same one-line verbs the engine's DSL accepts,
 * converted client-side into the JSON wire format the service consumes. */

import type { ActionDoc } from "./api.js";

const ARG_NAMES: Record<string, string[]> = {
  REMOVE: ["object_id"],
  MOVE: ["object_id", "x", "y"],
  KEEP: ["object_id"],
  FALL: ["object_id", "delta_y"],
  RESIZE: ["object_id", "scale"],
  RETOUCH: ["object_id", "brightness", "contrast", "color", "sharpness"],
  EDIT: ["object_id", "prompt", "edit_type"],
  INSERT: ["prompt", "x", "y", "width", "height", "layer_relation"],
};

const NUMERIC = new Set([
  "x", "y", "delta_y", "scale", "brightness", "contrast", "color",
  "sharpness", "width", "height",
]);

export class DslError extends Error {}

/** Shell-style tokenizer: whitespace-separated, quotes group words. */
export function tokenize(line: string): string[] {
  const tokens: string[] = [];
  let current = "";
  let quote: string | null = null;
  let sawToken = false;
  for (const ch of line) {
    if (quote) {
      if (ch === quote) {
        quote = null;
      } else {
        current += ch;
      }
    } else if (ch === '"' || ch === "'") {
      quote = ch;
      sawToken = true;
    } else if (/\s/.test(ch)) {
      if (sawToken) {
        tokens.push(current);
        current = "";
        sawToken = false;
      }
    } else {
      current += ch;
      sawToken = true;
    }
  }
  if (quote) throw new DslError("unterminated quote");
  if (sawToken) tokens.push(current);
  return tokens;
}

export function parseDslLine(line: string): ActionDoc {
  const tokens = tokenize(line.trim());
  if (tokens.length === 0) throw new DslError("empty command");
  const verb = tokens[0].toUpperCase();
  const names = ARG_NAMES[verb];
  if (!names) throw new DslError(`unknown verb ${tokens[0]}`);
  const args = tokens.slice(1);
  if (args.length !== names.length) {
    throw new DslError(
      `${verb} takes ${names.length} argument(s) (${names.join(", ")}), got ${args.length}`,
    );
  }
  const doc: ActionDoc = { action: verb };
  names.forEach((name, k) => {
    if (NUMERIC.has(name)) {
      const value = Number(args[k]);
      if (!Number.isFinite(value)) {
        throw new DslError(`${verb}: ${name} must be numeric, got '${args[k]}'`);
      }
      doc[name] = value;
    } else {
      doc[name] = args[k];
    }
  });
  return doc;
}

export interface ConsoleEntry {
  kind: "input" | "info" | "error" | "reject" | "physics";
  text: string;
}

export function describeAction(doc: ActionDoc): string {
  const params = Object.entries(doc)
    .filter(([k]) => k !== "action" && k !== "reason")
    .map(([, v]) => String(v))
    .join(" ");
  return `${doc.action} ${params}`.trim();
}
