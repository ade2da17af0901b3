import type {
  FeedResponse,
  InteractionAck,
  InteractionKind,
  LeadersResponse,
  OotdDetailResponse,
  SimilarOotdsResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

/** Thin fetch client for the engine service; no client-side re-ranking. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string, params?: Record<string, string | number>): string {
    const u = new URL(path, this.baseUrl);
    for (const [k, v] of Object.entries(params ?? {})) {
      u.searchParams.set(k, String(v));
    }
    return u.toString();
  }

  async feed(userId: string, k = 10): Promise<FeedResponse> {
    const res = await this.fetchImpl(this.url("/feed", { user_id: userId, k }));
    return asJson<FeedResponse>(res);
  }

  async ootdDetail(ootdId: string): Promise<OotdDetailResponse> {
    const res = await this.fetchImpl(this.url(`/ootds/${ootdId}`));
    return asJson<OotdDetailResponse>(res);
  }

  async similarOotds(ootdId: string, k = 6): Promise<SimilarOotdsResponse> {
    const res = await this.fetchImpl(this.url("/similar-ootds", { ootd_id: ootdId, k }));
    return asJson<SimilarOotdsResponse>(res);
  }

  async leaders(userId: string, k = 5): Promise<LeadersResponse> {
    const res = await this.fetchImpl(this.url("/leaders", { user_id: userId, k }));
    return asJson<LeadersResponse>(res);
  }

  async interact(
    userId: string,
    kind: InteractionKind,
    targetId: string,
  ): Promise<InteractionAck> {
    const res = await this.fetchImpl(this.url("/interactions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ user_id: userId, kind, target_id: targetId }),
    });
    return asJson<InteractionAck>(res);
  }

  async health(): Promise<{ status: string; snapshot_version: number }> {
    const res = await this.fetchImpl(this.url("/health"));
    return asJson(res);
  }
}
