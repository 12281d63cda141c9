/**
 * Typed client for the annotation service. Commit outcomes that the UI
 * must handle specially (revision conflicts, rejected groups) come back
 * as values rather than exceptions; everything else throws ApiError.
 */

import type {
  CommitAccepted,
  CommitRequest,
  SequenceDetail,
  SequenceListPage,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export type CommitResult =
  | { kind: "ok"; revision: number; identityId: string }
  | { kind: "conflict"; currentRevision: number }
  | { kind: "rejected"; message: string };

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

function describeDetail(detail: unknown): string {
  if (typeof detail === "string") return detail;
  if (Array.isArray(detail)) {
    return detail
      .map((d) => (d && typeof d === "object" && "msg" in d
        ? String((d as { msg: unknown }).msg) : String(d)))
      .join("; ");
  }
  if (detail && typeof detail === "object" && "error" in detail) {
    return String((detail as { error: unknown }).error);
  }
  return JSON.stringify(detail);
}

export class AnnotatorClient {
  readonly baseUrl: string;
  readonly annotator: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", annotator = "anonymous", fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.annotator = annotator;
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) {
      const body = await resp.json().catch(() => null);
      throw new ApiError(resp.status,
        body && typeof body === "object" && "detail" in body
          ? describeDetail((body as { detail: unknown }).detail)
          : `request failed with status ${resp.status}`);
    }
    return resp.json() as Promise<T>;
  }

  listSequences(cursor = 0, limit = 50): Promise<SequenceListPage> {
    return this.getJson(`/sequences?cursor=${cursor}&limit=${limit}`);
  }

  getSequence(sequenceId: string): Promise<SequenceDetail> {
    return this.getJson(`/sequences/${encodeURIComponent(sequenceId)}`);
  }

  async commitIdentity(sequenceId: string,
                       request: CommitRequest): Promise<CommitResult> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/sequences/${encodeURIComponent(sequenceId)}/identities`,
      {
        method: "POST",
        headers: {
          "Content-Type": "application/json",
          "X-Annotator": this.annotator,
        },
        body: JSON.stringify(request),
      });
    if (resp.ok) {
      const body = await resp.json() as CommitAccepted;
      return { kind: "ok", revision: body.revision,
               identityId: body.identity_id };
    }
    const body = await resp.json().catch(() => ({}));
    const detail = (body && typeof body === "object" && "detail" in body)
      ? (body as { detail: unknown }).detail : body;
    if (resp.status === 409) {
      const revision = (detail && typeof detail === "object"
        && "revision" in detail)
        ? Number((detail as { revision: unknown }).revision) : -1;
      return { kind: "conflict", currentRevision: revision };
    }
    if (resp.status === 422) {
      return { kind: "rejected", message: describeDetail(detail) };
    }
    throw new ApiError(resp.status, describeDetail(detail));
  }

  exportUrl(): string {
    return `${this.baseUrl}/export`;
  }

  async fetchExport(): Promise<string> {
    const resp = await this.fetchFn(this.exportUrl());
    if (!resp.ok) {
      throw new ApiError(resp.status, "export failed");
    }
    return resp.text();
  }
}
