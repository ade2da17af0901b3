import { describe, expect, it } from "vitest";
import { ActionQueue, FeedLoader, diffRanks, tagCount } from "../src/state.js";
import type { FeedCard } from "../src/types.js";

function card(id: string, tags: string[] = []): FeedCard {
  return {
    ootd_id: id,
    uploader_id: "u",
    hashtags: tags,
    image_ref: "placeholder:jeans:blue",
    items: [],
    score: 0,
    source: "cf",
  };
}

describe("diffRanks", () => {
  it("marks unchanged, moved, and new cards", () => {
    const before = [card("a"), card("b"), card("c")];
    const after = [card("b"), card("a"), card("d")];
    const moves = diffRanks(before, after);
    expect(moves).toEqual([
      { ootd_id: "b", kind: "up", delta: 1 },
      { ootd_id: "a", kind: "down", delta: -1 },
      { ootd_id: "d", kind: "new", delta: 0 },
    ]);
  });

  it("same order produces only 'same'", () => {
    const feed = [card("a"), card("b")];
    expect(diffRanks(feed, feed).every((m) => m.kind === "same")).toBe(true);
  });
});

describe("tagCount", () => {
  it("counts matching hashtags within top-k only", () => {
    const cards = [card("a", ["denim"]), card("b", ["office"]), card("c", ["denim"])];
    expect(tagCount(cards, "denim", 2)).toBe(1);
    expect(tagCount(cards, "denim", 3)).toBe(2);
  });
});

describe("ActionQueue", () => {
  it("runs actions strictly in FIFO order", async () => {
    const queue = new ActionQueue();
    const order: number[] = [];
    const slow = queue.enqueue(async () => {
      await new Promise((r) => setTimeout(r, 30));
      order.push(1);
    });
    const fast = queue.enqueue(async () => {
      order.push(2);
    });
    await Promise.all([slow, fast]);
    expect(order).toEqual([1, 2]);
  });

  it("keeps processing after a failed action", async () => {
    const queue = new ActionQueue();
    await expect(
      queue.enqueue(async () => {
        throw new Error("nope");
      }),
    ).rejects.toThrow("nope");
    await expect(queue.enqueue(async () => "ok")).resolves.toBe("ok");
    expect(queue.pending).toBe(0);
  });
});

describe("FeedLoader", () => {
  it("coalesces refreshes into at most one in-flight request", async () => {
    let resolve: (cards: FeedCard[]) => void = () => {};
    let calls = 0;
    const loader = new FeedLoader(
      () =>
        new Promise<FeedCard[]>((r) => {
          calls += 1;
          resolve = r;
        }),
    );
    const first = loader.refresh();
    const second = loader.refresh();
    const third = loader.refresh();
    expect(calls).toBe(1); // the two extra refreshes wait
    resolve([card("a")]);
    await first;
    await new Promise((r) => setTimeout(r, 0)); // let the queued fetch start
    expect(calls).toBe(2); // trailing refresh fires exactly once for both waiters
    resolve([card("b")]);
    await Promise.all([second, third]);
    expect(loader.current.map((c) => c.ootd_id)).toEqual(["b"]);
  });

  it("tracks previous feed for rank diffing", async () => {
    const feeds: FeedCard[][] = [[card("a"), card("b")], [card("b"), card("a")]];
    const loader = new FeedLoader(async () => feeds.shift() ?? []);
    await loader.refresh();
    await loader.refresh();
    expect(loader.moves[0]).toEqual({ ootd_id: "b", kind: "up", delta: 1 });
  });
});
