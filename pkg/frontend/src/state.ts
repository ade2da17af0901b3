import type { FeedCard } from "./types.js";

/** Rank movement of one card between two feed fetches. */
export interface RankMove {
  ootd_id: string;
  kind: "up" | "down" | "same" | "new";
  delta: number; // positions gained (positive = moved up)
}

/**
 * Diff two feed orderings. Cards absent from the new feed are dropped;
 * cards absent from the old one are marked "new".
 */
export function diffRanks(before: FeedCard[], after: FeedCard[]): RankMove[] {
  const oldIndex = new Map(before.map((c, i) => [c.ootd_id, i]));
  return after.map((card, i) => {
    const prev = oldIndex.get(card.ootd_id);
    if (prev === undefined) {
      return { ootd_id: card.ootd_id, kind: "new", delta: 0 };
    }
    const delta = prev - i;
    const kind = delta > 0 ? "up" : delta < 0 ? "down" : "same";
    return { ootd_id: card.ootd_id, kind, delta };
  });
}

/** Count cards in the top-k whose hashtags include the given tag. */
export function tagCount(cards: FeedCard[], tag: string, k: number): number {
  return cards.slice(0, k).filter((c) => c.hashtags.includes(tag)).length;
}

/**
 * FIFO action queue: interactions post strictly in submission order, one at
 * a time, even when the UI fires several in a burst.
 */
export class ActionQueue {
  private chain: Promise<void> = Promise.resolve();
  private depth = 0;

  get pending(): number {
    return this.depth;
  }

  enqueue<T>(action: () => Promise<T>): Promise<T> {
    this.depth += 1;
    const run = this.chain.then(async () => {
      try {
        return await action();
      } finally {
        this.depth -= 1;
      }
    });
    this.chain = run.then(
      () => undefined,
      () => undefined,
    );
    return run;
  }
}

/**
 * Feed loader with at most one in-flight request: refreshes requested while
 * a fetch is running all share a single trailing re-fetch.
 */
export class FeedLoader {
  private inFlight: Promise<FeedCard[]> | null = null;
  private queued: Promise<FeedCard[]> | null = null;
  current: FeedCard[] = [];
  previous: FeedCard[] = [];
  fetches = 0;

  constructor(private readonly fetchFeed: () => Promise<FeedCard[]>) {}

  refresh(): Promise<FeedCard[]> {
    if (this.inFlight) {
      this.queued ??= this.inFlight
        .catch(() => undefined)
        .then(() => {
          this.queued = null;
          return this.start();
        });
      return this.queued;
    }
    return this.start();
  }

  private async start(): Promise<FeedCard[]> {
    this.fetches += 1;
    const request = this.fetchFeed();
    this.inFlight = request;
    try {
      const cards = await request;
      this.previous = this.current;
      this.current = cards;
      return this.current;
    } finally {
      this.inFlight = null;
    }
  }

  get moves(): RankMove[] {
    return diffRanks(this.previous, this.current);
  }
}
