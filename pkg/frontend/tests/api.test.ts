import { describe, expect, it, vi } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("builds feed requests with query parameters", async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL) => {
      expect(String(url)).toBe("http://host:1234/feed?user_id=probe&k=7");
      return jsonResponse({ snapshot_version: 3, user_id: "probe", results: [] });
    });
    const api = new ApiClient("http://host:1234", fetchMock as typeof fetch);
    const feed = await api.feed("probe", 7);
    expect(feed.snapshot_version).toBe(3);
    expect(fetchMock).toHaveBeenCalledTimes(1);
  });

  it("posts interactions as JSON", async () => {
    const fetchMock = vi.fn(async (_url: RequestInfo | URL, init?: RequestInit) => {
      expect(init?.method).toBe("POST");
      expect(JSON.parse(String(init?.body))).toEqual({
        user_id: "probe",
        kind: "like",
        target_id: "o1",
      });
      return jsonResponse({ recorded: true, snapshot_version: 9 });
    });
    const api = new ApiClient("http://host:1234", fetchMock as typeof fetch);
    const ack = await api.interact("probe", "like", "o1");
    expect(ack.recorded).toBe(true);
  });

  it("surfaces service errors with status and message", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ error: "unknown user 'ghost'" }, 404));
    const api = new ApiClient("http://host:1234", fetchMock as typeof fetch);
    const err = await api.feed("ghost").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
    expect((err as ApiError).message).toContain("unknown user");
  });
});
