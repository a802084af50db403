/**
 * Typed client for the curation service's JSON endpoints.
 *
 * Thin fetch wrappers only: every response body is JSON, and non-2xx
 * responses carry {code, message, violations?}, which surfaces here as
 * ApiError so callers can branch on status and code.
 */

import type { ManifestJson, VerdictMap, ViolationJson } from "./rules.js";

export interface TopicInfo {
  name: string;
  slug: string;
  keywords: string[];
  pool: boolean;
}

export interface PoolSentenceInfo {
  sid: string;
  text: string;
  distance: number | null;
  dissimilarity: number | null;
  closest: string | null;
}

export interface PoolPage {
  topic: string;
  slug: string;
  total: number;
  offset: number;
  limit: number;
  sentences: PoolSentenceInfo[];
}

export interface DraftResource {
  id: string;
  revision: number;
  status: string;
  manifest: ManifestJson;
  verdicts: VerdictMap | null;
  valid: boolean | null;
}

export interface ValidateResult {
  id: string;
  revision: number;
  valid: boolean;
  verdicts: VerdictMap;
}

export interface PublishResult {
  id: string;
  revision: number;
  slug: string;
  published_at: string;
  tags: string[];
  page: string;
}

export interface ArticleInfo {
  manifest_id: string;
  slug: string;
  title: string;
  topic: string;
  published_at: string;
  tags: string[];
  page: string;
}

export interface SectionVerdict {
  section: string;
  valid: boolean;
  violations: ViolationJson[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public violations?: SectionVerdict[]
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(public baseUrl = "", fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchFn(this.baseUrl + path, init);
    let data: any = null;
    try {
      data = await res.json();
    } catch {
      data = null;
    }
    if (!res.ok) {
      const code = data && data.code ? String(data.code) : "unknown";
      const message = data && data.message ? String(data.message) : `HTTP ${res.status}`;
      throw new ApiError(res.status, code, message, data ? data.violations : undefined);
    }
    return data as T;
  }

  topics(): Promise<{ topics: TopicInfo[] }> {
    return this.request("GET", "/api/topics");
  }

  pool(slug: string, offset = 0, limit = 50): Promise<PoolPage> {
    const q = `offset=${encodeURIComponent(offset)}&limit=${encodeURIComponent(limit)}`;
    return this.request("GET", `/api/pools/${encodeURIComponent(slug)}?${q}`);
  }

  drafts(): Promise<{ drafts: DraftResource[] }> {
    return this.request("GET", "/api/drafts");
  }

  createDraft(payload: object): Promise<DraftResource> {
    return this.request("POST", "/api/drafts", payload);
  }

  getDraft(id: string): Promise<DraftResource> {
    return this.request("GET", `/api/drafts/${encodeURIComponent(id)}`);
  }

  putDraft(id: string, revision: number, manifest: ManifestJson): Promise<DraftResource> {
    return this.request("PUT", `/api/drafts/${encodeURIComponent(id)}`, { revision, manifest });
  }

  validateDraft(id: string): Promise<ValidateResult> {
    return this.request("POST", `/api/drafts/${encodeURIComponent(id)}/validate`);
  }

  publishDraft(id: string): Promise<PublishResult> {
    return this.request("POST", `/api/drafts/${encodeURIComponent(id)}/publish`);
  }

  articles(): Promise<{ articles: ArticleInfo[] }> {
    return this.request("GET", "/api/articles");
  }
}
