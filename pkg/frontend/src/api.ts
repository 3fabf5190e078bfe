/**
 * Typed client for the annotation service JSON API.
 *
 * The service is intentionally blind-first: `/api/next` payloads carry no
 * label fields at all; original and revised labels appear only in the
 * `/api/vote` response, after the vote has been committed to the log.
 */

export interface RecordPayload {
  record_id: string;
  words: string[];
  sentence: string;
  aspect_index: number;
  aspect: string;
  dataset: string;
  scheme: string;
  class_names: string[];
}

export interface RevealedRecord extends RecordPayload {
  original_label: number;
  revised_label: number | null;
}

export interface Progress {
  voted: number;
  total: number;
}

export interface NextResponse {
  done: boolean;
  record: RecordPayload | null;
  progress: Progress;
}

export interface VoteResponse {
  ok: boolean;
  vote: { record_id: string; annotator: string; label: number };
  ts: number;
  revealed: RevealedRecord;
}

export interface AgreementStats {
  matching: number;
  total: number;
  rate: number | null;
}

export interface StatsResponse {
  sample_size: number;
  votes: number;
  per_annotator: Record<string, number>;
  agreement: AgreementStats;
  merged_records: number;
}

/** Minimal fetch surface so tests can inject an in-memory backend. */
export interface FetchResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export interface FetchLike {
  (
    url: string,
    init?: { method?: string; headers?: Record<string, string>; body?: string },
  ): Promise<FetchResponseLike>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ApiClient {
  next(annotator: string): Promise<NextResponse>;
  vote(recordId: string, annotator: string, label: number): Promise<VoteResponse>;
  stats(): Promise<StatsResponse>;
  item(recordId: string): Promise<RevealedRecord>;
}

export function createClient(baseUrl = "", fetchFn?: FetchLike): ApiClient {
  const doFetch: FetchLike =
    fetchFn ?? ((url, init) => (globalThis.fetch as unknown as FetchLike)(url, init));

  async function request<T>(
    path: string,
    init?: { method?: string; headers?: Record<string, string>; body?: string },
  ): Promise<T> {
    const res = await doFetch(baseUrl + path, init);
    let body: unknown = {};
    try {
      body = await res.json();
    } catch {
      body = {};
    }
    if (!res.ok) {
      const message =
        typeof body === "object" && body !== null && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${res.status}`;
      throw new ApiError(res.status, message);
    }
    return body as T;
  }

  return {
    next: (annotator) =>
      request<NextResponse>(`/api/next?annotator=${encodeURIComponent(annotator)}`),
    vote: (recordId, annotator, label) =>
      request<VoteResponse>("/api/vote", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ record_id: recordId, annotator, label }),
      }),
    stats: () => request<StatsResponse>("/api/stats"),
    item: (recordId) =>
      request<RevealedRecord>(`/api/items/${encodeURIComponent(recordId)}`),
  };
}
