import type {
  NextItemResponse,
  QueueEntry,
  TallyResponse,
  VoteRequest,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ReviewApi {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async nextItem(surveyId: string, evaluator: string): Promise<NextItemResponse> {
    const response = await fetch(
      this.url(`/surveys/${encodeURIComponent(surveyId)}/next?evaluator=${encodeURIComponent(evaluator)}`),
    );
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as NextItemResponse;
  }

  async submitVote(vote: VoteRequest): Promise<void> {
    const response = await fetch(this.url("/votes"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(vote),
    });
    if (!response.ok) throw await parseError(response);
  }

  async tally(surveyId: string): Promise<TallyResponse> {
    const response = await fetch(
      this.url(`/surveys/${encodeURIComponent(surveyId)}/tally`),
    );
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as TallyResponse;
  }

  async matchQueue(): Promise<QueueEntry[]> {
    const response = await fetch(this.url("/matches/queue"));
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as QueueEntry[];
  }

  async verdict(key: string, verdict: "accept" | "reject", reviewer: string): Promise<QueueEntry> {
    const response = await fetch(
      this.url(`/matches/${encodeURIComponent(key)}/verdict`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ verdict, reviewer_id: reviewer }),
      },
    );
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as QueueEntry;
  }

  mediaUrl(memeId: string): string {
    return this.url(`/media/${encodeURIComponent(memeId)}`);
  }
}
