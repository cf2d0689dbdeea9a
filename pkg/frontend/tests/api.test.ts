import { describe, expect, it, vi } from "vitest";

import { ApiError, StageApi } from "../src/api.js";

function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("StageApi", () => {
  it("creates sessions with the bundle reference", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ id: "s1", round: 0 }));
    const api = new StageApi("http://host", fetchMock as unknown as typeof fetch);
    const state = await api.createSession("crow");
    expect(state.id).toBe("s1");
    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("http://host/sessions");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({ bundle: "crow" });
  });

  it("posts the action wire format verbatim", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ round: 1, records: [], physics: [], digest: "d" }));
    const api = new StageApi("http://host", fetchMock as unknown as typeof fetch);
    await api.submitActions("s1", [{ action: "REMOVE", object_id: "pumpkin" }]);
    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("http://host/sessions/s1/actions");
    expect(JSON.parse(init.body as string)).toEqual({
      action_sequence: [{ action: "REMOVE", object_id: "pumpkin" }],
    });
  });

  it("builds render urls with round and version", () => {
    const api = new StageApi("http://host");
    expect(api.renderUrl("s1")).toBe("http://host/sessions/s1/render");
    expect(api.renderUrl("s1", 2, "abc")).toBe(
      "http://host/sessions/s1/render?round=2&v=abc",
    );
  });

  it("surfaces structured errors with their stable code", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ error: "round_out_of_range", message: "round 5 outside [0, 1]" }, 404));
    const api = new StageApi("http://host", fetchMock as unknown as typeof fetch);
    try {
      await api.state("s1");
      expect.unreachable();
    } catch (err) {
      const apiErr = err as ApiError;
      expect(apiErr).toBeInstanceOf(ApiError);
      expect(apiErr.status).toBe(404);
      expect(apiErr.code).toBe("round_out_of_range");
      expect(apiErr.message).toContain("outside");
    }
  });

  it("unwraps fastapi detail envelopes", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ detail: { error: "nothing_to_undo", message: "cannot undo 3" } }, 400));
    const api = new StageApi("http://host", fetchMock as unknown as typeof fetch);
    await expect(api.undo("s1", 3)).rejects.toMatchObject({ code: "nothing_to_undo" });
  });
});
