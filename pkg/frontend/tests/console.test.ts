import { describe, expect, it } from "vitest";

import { DslError, describeAction, parseDslLine, tokenize } from "../src/console.js";

describe("tokenize", () => {
  it("splits on whitespace", () => {
    expect(tokenize("MOVE lamp 420 310")).toEqual(["MOVE", "lamp", "420", "310"]);
  });

  it("groups quoted strings", () => {
    expect(tokenize('INSERT "a red ball" 4 5 6 7 frontmost')).toEqual([
      "INSERT", "a red ball", "4", "5", "6", "7", "frontmost",
    ]);
  });

  it("rejects unterminated quotes", () => {
    expect(() => tokenize('EDIT lamp "broken')).toThrow(DslError);
  });
});

describe("parseDslLine", () => {
  it("maps MOVE to the wire format", () => {
    expect(parseDslLine("MOVE lamp 420 310")).toEqual({
      action: "MOVE", object_id: "lamp", x: 420, y: 310,
    });
  });

  it("is case-insensitive on verbs", () => {
    expect(parseDslLine("remove pumpkin")).toEqual({
      action: "REMOVE", object_id: "pumpkin",
    });
  });

  it("maps INSERT with a quoted prompt", () => {
    expect(parseDslLine('INSERT "tiny ghost" 10 20 8 8 behind:lamp')).toEqual({
      action: "INSERT", prompt: "tiny ghost", x: 10, y: 20,
      width: 8, height: 8, layer_relation: "behind:lamp",
    });
  });

  it("rejects unknown verbs", () => {
    expect(() => parseDslLine("TELEPORT lamp 1 2")).toThrow(/unknown verb/);
  });

  it("rejects wrong arity with the argument list", () => {
    expect(() => parseDslLine("MOVE lamp 12")).toThrow(/takes 3 argument/);
  });

  it("rejects non-numeric numerics", () => {
    expect(() => parseDslLine("MOVE lamp twelve 13")).toThrow(/must be numeric/);
  });

  it("rejects empty input", () => {
    expect(() => parseDslLine("   ")).toThrow(/empty/);
  });
});

describe("describeAction", () => {
  it("renders a compact summary without reason metadata", () => {
    expect(describeAction({ action: "MOVE", object_id: "lamp", x: 1, y: 2, reason: "r" }))
      .toBe("MOVE lamp 1 2");
  });
});
