/**
 * In-memory stand-in for the annotation service, implementing the same
 * routes and semantics over the injectable fetch interface: blind
 * `/api/next` payloads, one vote per (record, annotator) with 409 on
 * duplicates, and agreement statistics against the revised labels.
 */

import { FetchLike, FetchResponseLike } from "../src/api.js";

export interface FakeRecord {
  record_id: string;
  words: string[];
  aspect_index: number;
  original_label: number;
  revised_label: number | null;
}

export interface LoggedVote {
  record_id: string;
  annotator: string;
  label: number;
  ts: number;
}

function jsonResponse(status: number, payload: unknown): FetchResponseLike {
  return {
    ok: status < 400,
    status,
    json: async () => payload,
  };
}

/** Resolvable gate so tests can hold a request open mid-flight. */
export function createGate(): { promise: Promise<void>; open: () => void } {
  let open!: () => void;
  const promise = new Promise<void>((resolve) => {
    open = resolve;
  });
  return { promise, open };
}

export class FakeBackend {
  votes: LoggedVote[] = [];
  voteRequests = 0;
  nextRequests = 0;
  itemRequests = 0;
  /** every /api/next body handed to the client, for blindness assertions */
  servedNextPayloads: unknown[] = [];
  /** when set, /api/vote stalls until the gate opens */
  voteGate: Promise<void> | null = null;
  statsOverride: unknown | null = null;

  constructor(
    public records: FakeRecord[],
    public classNames: string[] = ["literal", "metaphorical"],
    public dataset = "fixture",
    public scheme = "binary_moh",
  ) {}

  private find(recordId: string): FakeRecord | undefined {
    return this.records.find((r) => r.record_id === recordId);
  }

  private payload(record: FakeRecord, includeLabels: boolean): Record<string, unknown> {
    const base: Record<string, unknown> = {
      record_id: record.record_id,
      words: [...record.words],
      sentence: record.words.join(" "),
      aspect_index: record.aspect_index,
      aspect: record.words[record.aspect_index],
      dataset: this.dataset,
      scheme: this.scheme,
      class_names: [...this.classNames],
    };
    if (includeLabels) {
      base.original_label = record.original_label;
      base.revised_label = record.revised_label;
    }
    return base;
  }

  private next(annotator: string): FetchResponseLike {
    this.nextRequests += 1;
    const voted = new Set(
      this.votes.filter((v) => v.annotator === annotator).map((v) => v.record_id),
    );
    const progress = { voted: voted.size, total: this.records.length };
    const pending = this.records.find((r) => !voted.has(r.record_id));
    const body =
      pending === undefined
        ? { done: true, record: null, progress }
        : { done: false, record: this.payload(pending, false), progress };
    this.servedNextPayloads.push(body);
    return jsonResponse(200, body);
  }

  private async vote(raw: string | undefined): Promise<FetchResponseLike> {
    this.voteRequests += 1;
    if (this.voteGate !== null) {
      await this.voteGate;
    }
    let body: unknown;
    try {
      body = JSON.parse(raw ?? "");
    } catch {
      return jsonResponse(400, { error: "body must be a JSON object" });
    }
    const { record_id, annotator, label } = body as {
      record_id?: unknown;
      annotator?: unknown;
      label?: unknown;
    };
    if (typeof record_id !== "string" || record_id === "") {
      return jsonResponse(400, { error: "record_id is required" });
    }
    if (typeof annotator !== "string" || annotator.trim() === "") {
      return jsonResponse(400, { error: "annotator is required" });
    }
    if (typeof label !== "number" || !Number.isInteger(label)) {
      return jsonResponse(400, { error: "label must be an integer" });
    }
    const record = this.find(record_id);
    if (record === undefined) {
      return jsonResponse(404, { error: `record '${record_id}' is not in the voting sample` });
    }
    if (label < 0 || label >= this.classNames.length) {
      return jsonResponse(400, { error: `label ${label} is outside the scheme` });
    }
    const duplicate = this.votes.some(
      (v) => v.record_id === record_id && v.annotator === annotator,
    );
    if (duplicate) {
      return jsonResponse(409, {
        error: `annotator '${annotator}' already voted on '${record_id}'`,
      });
    }
    const entry: LoggedVote = { record_id, annotator, label, ts: this.votes.length + 1 };
    this.votes.push(entry);
    return jsonResponse(200, {
      ok: true,
      vote: { record_id, annotator, label },
      ts: entry.ts,
      revealed: this.payload(record, true),
    });
  }

  private stats(): FetchResponseLike {
    if (this.statsOverride !== null) {
      return jsonResponse(200, this.statsOverride);
    }
    let matching = 0;
    let total = 0;
    for (const vote of this.votes) {
      const record = this.find(vote.record_id);
      if (record === undefined || record.revised_label === null) {
        continue;
      }
      total += 1;
      if (vote.label === record.revised_label) {
        matching += 1;
      }
    }
    const perAnnotator: Record<string, number> = {};
    for (const vote of this.votes) {
      perAnnotator[vote.annotator] = (perAnnotator[vote.annotator] ?? 0) + 1;
    }
    return jsonResponse(200, {
      sample_size: this.records.length,
      votes: this.votes.length,
      per_annotator: perAnnotator,
      agreement: { matching, total, rate: total === 0 ? null : matching / total },
      merged_records: 0,
    });
  }

  fetch: FetchLike = async (url, init) => {
    const [path, query = ""] = url.split("?");
    if (path === "/api/next") {
      const annotator = new URLSearchParams(query).get("annotator") ?? "";
      if (annotator.trim() === "") {
        return jsonResponse(400, { error: "annotator query parameter is required" });
      }
      return this.next(annotator);
    }
    if (path === "/api/vote" && init?.method === "POST") {
      return this.vote(init.body);
    }
    if (path === "/api/stats") {
      return this.stats();
    }
    if (path.startsWith("/api/items/")) {
      this.itemRequests += 1;
      const record = this.find(decodeURIComponent(path.slice("/api/items/".length)));
      if (record === undefined) {
        return jsonResponse(404, { error: "unknown record" });
      }
      return jsonResponse(200, this.payload(record, true));
    }
    return jsonResponse(404, { error: `no such endpoint ${path}` });
  };
}

export function makeRecords(n: number): FakeRecord[] {
  return Array.from({ length: n }, (_, i) => ({
    record_id: `r${String(i).padStart(3, "0")}`,
    words: ["the", "fire", `spread${i}`],
    aspect_index: 1,
    original_label: 0,
    revised_label: 1,
  }));
}

/** Drain pending promise chains (fake fetch resolves on microtasks). */
export async function flush(): Promise<void> {
  for (let i = 0; i < 5; i += 1) {
    await new Promise<void>((resolve) => setTimeout(resolve, 0));
  }
}

/** Walk a JSON-ish value and collect every object key, at any depth. */
export function allKeys(value: unknown, into: Set<string> = new Set()): Set<string> {
  if (Array.isArray(value)) {
    for (const item of value) {
      allKeys(item, into);
    }
  } else if (typeof value === "object" && value !== null) {
    for (const [key, item] of Object.entries(value)) {
      into.add(key);
      allKeys(item, into);
    }
  }
  return into;
}
