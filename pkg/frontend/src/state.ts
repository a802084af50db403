/**
 * Draft-editing state for the assembly studio.
 *
 * Workbench mirrors one draft manifest plus an unsaved-changes flag and
 * the last server verdicts. Every mutation recomputes nothing; previews
 * are computed on demand from the rule mirror. The one hard invariant:
 * an edit the client-side preview marks invalid is never submitted
 * without an explicit override, and publishing refuses outright while
 * the preview shows violations (the server re-validates regardless).
 */

import { ApiClient, ApiError, DraftResource, PoolPage, PoolSentenceInfo, PublishResult } from "./api.js";
import {
  EditOpJson,
  ManifestEntryJson,
  ManifestJson,
  RulePool,
  VerdictMap,
  VerdictJson,
  allValid,
  applyEdit,
  excerptWordCount,
  manifestVerdicts,
  RuleError,
  toChars,
  validateSentenceEdit,
  wordSpans,
  BODY_KINDS,
} from "./rules.js";

export type Section = "excerpt" | "body";

/** Thrown when the draft on the server moved ahead; reload and retry. */
export class ConflictError extends Error {
  constructor(message: string, public code: string) {
    super(message);
  }
}

/** Thrown when a submit is blocked by the client-side rule preview. */
export class PreviewBlockedError extends Error {}

export interface EntryPreview {
  text: string | null;
  error: string | null;
  verdict: VerdictJson | null;
}

export class Workbench {
  topic = "";
  slug = "";
  draftId: string | null = null;
  revision = 0;
  status = "draft";
  title = "";
  excerpt: ManifestEntryJson[] = [];
  body: ManifestEntryJson[] = [];
  dirty = false;
  lastVerdicts: VerdictMap | null = null;
  overrideInvalid = false;
  private poolCache = new Map<string, PoolSentenceInfo>();

  constructor(private api: ApiClient) {}

  startDraft(topic: string, slug: string): void {
    this.topic = topic;
    this.slug = slug;
    this.draftId = null;
    this.revision = 0;
    this.status = "draft";
    this.title = "";
    this.excerpt = [];
    this.body = [];
    this.dirty = false;
    this.lastVerdicts = null;
    this.overrideInvalid = false;
  }

  /** Adopt a draft resource fetched from the server (reload after conflict). */
  loadResource(res: DraftResource): void {
    this.draftId = res.id;
    this.revision = res.revision;
    this.status = res.status;
    this.topic = res.manifest.topic;
    this.title = res.manifest.title;
    this.excerpt = res.manifest.excerpt.map((e) => ({ ...e, op: { ...e.op } }));
    this.body = res.manifest.body.map((e) => ({ ...e, op: { ...e.op } }));
    this.lastVerdicts = res.verdicts;
    this.dirty = false;
  }

  rememberPool(sentences: PoolSentenceInfo[]): void {
    for (const s of sentences) this.poolCache.set(s.sid, s);
  }

  poolSentence(sid: string): PoolSentenceInfo | undefined {
    return this.poolCache.get(sid);
  }

  private rulePool(): RulePool {
    return new RulePool([...this.poolCache.values()].map((s) => ({ sid: s.sid, text: s.text })));
  }

  section(section: Section): ManifestEntryJson[] {
    return section === "excerpt" ? this.excerpt : this.body;
  }

  addSentence(section: Section, sid: string): ManifestEntryJson {
    const entry: ManifestEntryJson = { sentence_id: sid, op: { kind: "none" } };
    this.section(section).push(entry);
    this.dirty = true;
    return entry;
  }

  removeEntry(section: Section, index: number): void {
    this.section(section).splice(index, 1);
    this.dirty = true;
  }

  moveEntry(section: Section, from: number, to: number): void {
    const list = this.section(section);
    if (from < 0 || from >= list.length || to < 0 || to >= list.length || from === to) return;
    const [entry] = list.splice(from, 1);
    list.splice(to, 0, entry);
    this.dirty = true;
  }

  setOp(section: Section, index: number, op: EditOpJson): void {
    this.section(section)[index].op = op;
    this.dirty = true;
  }

  /** Rendered text and inline verdict for one entry, for in-place feedback. */
  entryPreview(section: Section, index: number): EntryPreview {
    const entry = this.section(section)[index];
    const pooled = this.poolCache.get(entry.sentence_id);
    if (!pooled) return { text: null, error: "sentence not in the loaded pool", verdict: null };
    if (section === "body" && !BODY_KINDS.has(entry.op.kind)) {
      return {
        text: pooled.text,
        error: `body sentences must be verbatim; ${entry.op.kind} is not allowed`,
        verdict: null,
      };
    }
    if (entry.op.kind === "drop_sentence") {
      return { text: "", error: null, verdict: { valid: true, violations: [] } };
    }
    try {
      const text = applyEdit(pooled.text, entry.op);
      return { text, error: null, verdict: validateSentenceEdit(pooled.text, text) };
    } catch (err) {
      if (err instanceof RuleError) return { text: null, error: err.message, verdict: null };
      throw err;
    }
  }

  toManifest(): ManifestJson {
    return {
      id: this.draftId ?? "unsaved",
      topic: this.topic,
      title: this.title,
      excerpt: this.excerpt.map((e) => ({ ...e, op: { ...e.op } })),
      body: this.body.map((e) => ({ ...e, op: { ...e.op } })),
      image: null,
      status: this.status,
    };
  }

  previewVerdicts(): VerdictMap {
    return manifestVerdicts(this.toManifest(), this.rulePool());
  }

  previewValid(): boolean {
    return allValid(this.previewVerdicts());
  }

  excerptWords(): number {
    return excerptWordCount(this.toManifest(), this.rulePool());
  }

  /** Set the title to a verbatim token span of one body sentence. */
  setTitleFromBodySpan(bodyIndex: number, startToken: number, endToken: number): void {
    const entry = this.body[bodyIndex];
    if (!entry) throw new RuleError(`no body sentence at index ${bodyIndex}`);
    const pooled = this.poolCache.get(entry.sentence_id);
    if (!pooled) throw new RuleError("sentence not in the loaded pool");
    const spans = wordSpans(pooled.text);
    if (startToken < 0 || endToken <= startToken || endToken > spans.length) {
      throw new RuleError(`token span ${startToken}..${endToken} out of range`);
    }
    const chars = toChars(pooled.text);
    this.title = chars.slice(spans[startToken][0], spans[endToken - 1][1]).join("");
    this.dirty = true;
  }

  clearTitle(): void {
    this.title = "";
    this.dirty = true;
  }

  canPublish(): boolean {
    return (
      !this.dirty &&
      this.draftId !== null &&
      this.status !== "published" &&
      this.lastVerdicts !== null &&
      allValid(this.lastVerdicts) &&
      this.previewValid()
    );
  }

  private translateConflict(err: unknown): never {
    if (err instanceof ApiError && (err.code === "revision_conflict" || err.code === "published_frozen")) {
      throw new ConflictError(err.message, err.code);
    }
    throw err;
  }

  /**
   * Create or update the server draft from the current state. Blocked when
   * the rule preview shows violations, unless overrideInvalid is set.
   */
  async save(): Promise<DraftResource> {
    if (!this.previewValid() && !this.overrideInvalid) {
      throw new PreviewBlockedError(
        "the rule preview shows violations; fix them or set the override to submit anyway"
      );
    }
    const manifest = this.toManifest();
    let res: DraftResource;
    try {
      if (this.draftId === null) {
        res = await this.api.createDraft({
          topic: this.topic,
          title: manifest.title,
          excerpt: manifest.excerpt,
          body: manifest.body,
          image: null,
        });
      } else {
        manifest.id = this.draftId;
        res = await this.api.putDraft(this.draftId, this.revision, manifest);
      }
    } catch (err) {
      this.translateConflict(err);
    }
    this.draftId = res.id;
    this.revision = res.revision;
    this.status = res.status;
    this.lastVerdicts = res.verdicts;
    this.dirty = false;
    return res;
  }

  /** Save if needed, then ask the server for verdicts on the stored draft. */
  async validate(): Promise<VerdictMap> {
    if (this.dirty || this.draftId === null) await this.save();
    let result;
    try {
      result = await this.api.validateDraft(this.draftId as string);
    } catch (err) {
      this.translateConflict(err);
    }
    this.lastVerdicts = result.verdicts;
    this.revision = result.revision;
    this.status = result.valid ? "validated" : "draft";
    return result.verdicts;
  }

  /**
   * Publish the validated draft. There is no override path here: a draft
   * whose preview or server verdicts show violations is never submitted.
   */
  async publish(): Promise<PublishResult> {
    if (this.dirty || this.draftId === null || this.lastVerdicts === null) {
      await this.validate();
    }
    if (!this.previewValid() || this.lastVerdicts === null || !allValid(this.lastVerdicts)) {
      throw new PreviewBlockedError("draft fails the edit rules; publishing is blocked");
    }
    let result;
    try {
      result = await this.api.publishDraft(this.draftId as string);
    } catch (err) {
      this.translateConflict(err);
    }
    this.revision = result.revision;
    this.status = "published";
    return result;
  }
}

/** Paged view over one topic's kept pool. */
export class PoolPager {
  offset = 0;
  total = 0;
  limit: number;
  sentences: PoolSentenceInfo[] = [];

  constructor(private api: ApiClient, public slug: string, limit = 50) {
    this.limit = limit;
  }

  async load(offset = 0): Promise<PoolPage> {
    const page = await this.api.pool(this.slug, offset, this.limit);
    this.offset = page.offset;
    this.total = page.total;
    this.sentences = page.sentences;
    return page;
  }

  hasNext(): boolean {
    return this.offset + this.sentences.length < this.total;
  }

  hasPrev(): boolean {
    return this.offset > 0;
  }

  async next(): Promise<PoolPage> {
    return this.load(this.offset + this.limit);
  }

  async prev(): Promise<PoolPage> {
    return this.load(Math.max(0, this.offset - this.limit));
  }
}

/** Pool badge text: the stored dissimilarity, shown verbatim. */
export function noveltyBadge(s: PoolSentenceInfo): string {
  if (s.dissimilarity === null || s.dissimilarity === undefined) return "novelty n/a";
  return `novelty ${s.dissimilarity}`;
}
