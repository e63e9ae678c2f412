// In-memory stand-in for the review service, mirroring its semantics:
// meme x subtask items, per-evaluator progression, vote validation, tally
// with anonymized group keys, and the match-verification queue. Installed
// as a fetch stub so flows under test issue real requests.

import type { QueueEntry } from "../src/types.js";

export interface FakeSource {
  model: string;
  withContext: boolean;
}

const SUBTASKS = [
  "embedded_text",
  "image_caption",
  "meme_caption",
  "literary_devices",
  "emotions",
];
const SINGLE_MODE = new Set(["image_caption", "meme_caption"]);
const NONE_SUBTASKS = new Set(["literary_devices", "emotions"]);

interface FakeItem {
  item_id: string;
  meme_id: string;
  subtask: string;
  selection_mode: "single" | "multi";
  candidates: { candidate_id: string; text: string }[];
  allow_none: boolean;
  sourceByCandidate: Map<string, string>;
}

export class FakeReviewService {
  items: FakeItem[] = [];
  votes = new Map<string, string[]>(); // `${evaluator}::${item}` -> selections
  queue: QueueEntry[] = [];
  requests: { method: string; url: string; body?: string }[] = [];
  private sourceKeys: string[];

  constructor(
    public surveyId: string,
    memeIds: string[],
    sources: FakeSource[],
    candidateText: (source: FakeSource, memeId: string, subtask: string) => string,
  ) {
    this.sourceKeys = sources.map(
      (s) => `${s.model}|${s.withContext ? "with" : "without"}`,
    );
    let index = 0;
    for (const memeId of memeIds) {
      for (const subtask of SUBTASKS) {
        const rotation = index % sources.length;
        const shuffled = [...sources.slice(rotation), ...sources.slice(0, rotation)];
        const sourceByCandidate = new Map<string, string>();
        const candidates = shuffled.map((source, position) => {
          const cid = `c${position}`;
          sourceByCandidate.set(
            cid,
            `${source.model}|${source.withContext ? "with" : "without"}`,
          );
          return {
            candidate_id: cid,
            text: candidateText(source, memeId, subtask),
          };
        });
        this.items.push({
          item_id: `${this.surveyId}-item-${index}`,
          meme_id: memeId,
          subtask,
          selection_mode: SINGLE_MODE.has(subtask) ? "single" : "multi",
          candidates,
          allow_none: NONE_SUBTASKS.has(subtask),
          sourceByCandidate,
        });
        index += 1;
      }
    }
  }

  sourceOf(itemId: string, candidateId: string): string {
    const item = this.items.find((i) => i.item_id === itemId);
    return item?.sourceByCandidate.get(candidateId) ?? "unknown";
  }

  private json(payload: unknown, status = 200): Response {
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  private nextFor(evaluator: string): Response {
    const answered = this.items.filter(
      (item) => this.votes.has(`${evaluator}::${item.item_id}`),
    ).length;
    const progress = { answered, total: this.items.length };
    const pending = this.items.find(
      (item) => !this.votes.has(`${evaluator}::${item.item_id}`),
    );
    if (!pending) return this.json({ done: true, item: null, progress });
    const { sourceByCandidate: _hidden, ...blinded } = pending;
    return this.json({ done: false, item: blinded, progress });
  }

  private recordVote(body: string): Response {
    const vote = JSON.parse(body) as {
      evaluator_id: string;
      item_id: string;
      selected: string[];
    };
    const item = this.items.find((i) => i.item_id === vote.item_id);
    if (!item) return this.json({ detail: `unknown item ${vote.item_id}` }, 400);
    const known = new Set(item.candidates.map((c) => c.candidate_id));
    if (item.allow_none) known.add("none");
    for (const cid of vote.selected) {
      if (!known.has(cid)) return this.json({ detail: `unknown candidate ids ['${cid}']` }, 400);
    }
    if (item.selection_mode === "single" && vote.selected.length !== 1) {
      return this.json({ detail: `item ${vote.item_id} is single-choice` }, 400);
    }
    if (vote.selected.length === 0) {
      return this.json({ detail: "a vote must select at least one candidate" }, 400);
    }
    this.votes.set(`${vote.evaluator_id}::${vote.item_id}`, vote.selected);
    return this.json({ item_id: vote.item_id, recorded: true });
  }

  tallyCells(): Record<string, Record<string, number>> {
    const cells: Record<string, Record<string, number>> = {};
    for (const key of this.sourceKeys) {
      cells[key] = Object.fromEntries(SUBTASKS.map((s) => [s, 0]));
    }
    for (const [voteKey, selections] of this.votes) {
      const itemId = voteKey.split("::")[1];
      const item = this.items.find((i) => i.item_id === itemId)!;
      for (const cid of selections) {
        if (cid === "none") continue;
        const source = item.sourceByCandidate.get(cid)!;
        cells[source][item.subtask] += 1;
      }
    }
    return cells;
  }

  private tallyResponse(): Response {
    const cells = this.tallyCells();
    const anonymized: Record<string, Record<string, number>> = {};
    Object.keys(cells)
      .sort()
      .forEach((key, index) => {
        const counts = cells[key];
        const total = Object.values(counts).reduce((a, b) => a + b, 0);
        anonymized[`group-${index + 1}`] = { ...counts, total };
      });
    const grand = Object.values(anonymized).reduce((a, c) => a + c["total"], 0);
    return this.json({
      subtasks: SUBTASKS,
      cells: anonymized,
      abstentions: 0,
      grand_total: grand,
    });
  }

  private verdictResponse(key: string, body: string): Response {
    const { verdict } = JSON.parse(body) as { verdict: "accept" | "reject" };
    const entry = this.queue.find((e) => e.key === key);
    if (!entry) return this.json({ detail: `unknown verification entry '${key}'` }, 404);
    if (entry.status !== "stage2_pass") {
      return this.json({ detail: `entry '${key}' is not pending` }, 409);
    }
    entry.status = verdict === "accept" ? "verified" : "rejected";
    return this.json(entry);
  }

  fetchHandler = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = typeof input === "string" ? input : input.toString();
    const method = init?.method ?? "GET";
    const body = typeof init?.body === "string" ? init.body : undefined;
    this.requests.push({ method, url, body });

    const next = url.match(/\/surveys\/([^/]+)\/next\?evaluator=([^&]*)/);
    if (next && method === "GET") return this.nextFor(decodeURIComponent(next[2]));
    if (url.endsWith("/votes") && method === "POST") return this.recordVote(body ?? "{}");
    if (url.match(/\/surveys\/[^/]+\/tally$/) && method === "GET") return this.tallyResponse();
    if (url.endsWith("/matches/queue") && method === "GET") {
      return this.json(this.queue.filter((e) => e.status === "stage2_pass"));
    }
    const verdict = url.match(/\/matches\/([^/]+)\/verdict$/);
    if (verdict && method === "POST") {
      return this.verdictResponse(decodeURIComponent(verdict[1]), body ?? "{}");
    }
    if (url.match(/\/media\//)) return new Response("png-bytes", { status: 200 });
    return this.json({ detail: `no route for ${method} ${url}` }, 404);
  };
}

export function makeQueueEntry(instance: string, template: string): QueueEntry {
  return {
    key: `${instance}::${template}`,
    instance_id: instance,
    template_id: template,
    stage1_method: "concat",
    stage1_score: 0.42,
    stage2_score: 0.11,
    status: "stage2_pass",
  };
}
