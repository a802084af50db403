/**
 * Workbench and pager tests against a stubbed API client: pagination
 * walks the whole pool exactly once, selections record EditOp none,
 * the title picker copies verbatim spans, and the preview gate blocks
 * submitting rule-violating edits unless the override is set.
 */

import { describe, expect, it } from "vitest";
import { ApiClient, ApiError, DraftResource, PoolPage, PoolSentenceInfo } from "../src/api.js";
import { ConflictError, PoolPager, PreviewBlockedError, Workbench, noveltyBadge } from "../src/state.js";
import { makeOp } from "../src/rules.js";

function bigPool(n: number): PoolSentenceInfo[] {
  return Array.from({ length: n }, (_, i) => ({
    sid: `gen-0.${i}`,
    text: `sentence number ${i} of the synthetic pool file.`,
    distance: 10 + (i % 7),
    dissimilarity: 0.31 + (i % 50) / 100,
    closest: i % 3 === 0 ? `corpus line ${i}` : null,
  }));
}

/** In-memory stand-in for the service, implementing the pool endpoint. */
class FakeApi extends ApiClient {
  puts = 0;
  constructor(private poolRows: PoolSentenceInfo[]) {
    super("", () => Promise.reject(new Error("no network in this test")));
  }

  override async pool(slug: string, offset = 0, limit = 50): Promise<PoolPage> {
    return {
      topic: "Fake Topic",
      slug,
      total: this.poolRows.length,
      offset,
      limit,
      sentences: this.poolRows.slice(offset, offset + limit),
    };
  }

  override async createDraft(payload: object): Promise<DraftResource> {
    this.puts += 1;
    const p = payload as any;
    return {
      id: "draft-0001",
      revision: 1,
      status: "draft",
      manifest: { id: "draft-0001", topic: p.topic, title: p.title, excerpt: p.excerpt, body: p.body, image: null, status: "draft" },
      verdicts: null,
      valid: null,
    };
  }
}

const FIFTY_WORDS =
  Array.from({ length: 49 }, (_, i) => `word${i}`).join(" ") + " tail.";

function workbenchWithPool(): Workbench {
  const api = new FakeApi([]);
  const wb = new Workbench(api);
  wb.startDraft("Fake Topic", "fake-topic");
  wb.rememberPool([
    { sid: "a.1", text: FIFTY_WORDS, distance: 12, dissimilarity: 0.4, closest: null },
    { sid: "a.2", text: "Storms delayed the convoy.", distance: 9, dissimilarity: 0.36, closest: null },
    { sid: "a.3", text: "Officials said the terminal will reopen.", distance: 15, dissimilarity: 0.45, closest: null },
  ]);
  return wb;
}

describe("pool pagination", () => {
  it("walks a 1000-sentence pool showing every sentence exactly once", async () => {
    const api = new FakeApi(bigPool(1000));
    const pager = new PoolPager(api, "fake-topic", 50);
    await pager.load(0);
    const seen = new Map<string, number>();
    for (;;) {
      for (const s of pager.sentences) seen.set(s.sid, (seen.get(s.sid) ?? 0) + 1);
      if (!pager.hasNext()) break;
      await pager.next();
    }
    expect(seen.size).toBe(1000);
    for (const count of seen.values()) expect(count).toBe(1);
  });

  it("pages backward too", async () => {
    const api = new FakeApi(bigPool(120));
    const pager = new PoolPager(api, "fake-topic", 50);
    await pager.load(100);
    expect(pager.hasNext()).toBe(false);
    await pager.prev();
    expect(pager.offset).toBe(50);
    await pager.prev();
    expect(pager.offset).toBe(0);
    expect(pager.hasPrev()).toBe(false);
  });
});

describe("novelty badge", () => {
  it("shows the stored dissimilarity verbatim", () => {
    const s = bigPool(1)[0];
    expect(noveltyBadge(s)).toBe(`novelty ${s.dissimilarity}`);
    expect(noveltyBadge({ ...s, dissimilarity: null })).toBe("novelty n/a");
  });
});

describe("workbench", () => {
  it("records selections as EditOp none and flips the dirty flag", () => {
    const wb = workbenchWithPool();
    expect(wb.dirty).toBe(false);
    const entry = wb.addSentence("excerpt", "a.1");
    expect(entry.op).toEqual({ kind: "none" });
    expect(wb.dirty).toBe(true);
  });

  it("copies title spans verbatim from body sentences", () => {
    const wb = workbenchWithPool();
    wb.addSentence("body", "a.3");
    wb.setTitleFromBodySpan(0, 0, 3);
    expect(wb.title).toBe("Officials said the");
    wb.setTitleFromBodySpan(0, 2, 5);
    expect(wb.title).toBe("the terminal will");
  });

  it("previews inline verdicts that mirror the rules", () => {
    const wb = workbenchWithPool();
    wb.addSentence("excerpt", "a.2");
    wb.setOp("excerpt", 0, makeOp("replace_word", 1, "barely even moved"));
    const preview = wb.entryPreview("excerpt", 0);
    expect(preview.verdict?.valid).toBe(false);
    expect(preview.verdict?.violations[0].rule).toBe("single_edit");
    wb.setOp("excerpt", 0, makeOp("replace_word", 1, "halted"));
    expect(wb.entryPreview("excerpt", 0).verdict?.valid).toBe(true);
  });

  it("blocks saving an invalid draft unless the override is set", async () => {
    const wb = workbenchWithPool();
    wb.addSentence("excerpt", "a.2");
    wb.addSentence("body", "a.3");
    wb.setTitleFromBodySpan(0, 0, 2);
    await expect(wb.save()).rejects.toBeInstanceOf(PreviewBlockedError);
    wb.overrideInvalid = true;
    const res = await wb.save();
    expect(res.id).toBe("draft-0001");
    expect(wb.dirty).toBe(false);
    expect(wb.revision).toBe(1);
  });

  it("saves cleanly when the preview is satisfied", async () => {
    const wb = workbenchWithPool();
    wb.addSentence("excerpt", "a.1");
    wb.addSentence("body", "a.3");
    wb.setTitleFromBodySpan(0, 0, 4);
    expect(wb.previewValid()).toBe(true);
    expect(wb.excerptWords()).toBe(50);
    const res = await wb.save();
    expect(res.revision).toBe(1);
  });

  it("never offers publish while dirty or unvalidated", () => {
    const wb = workbenchWithPool();
    wb.addSentence("excerpt", "a.1");
    expect(wb.canPublish()).toBe(false);
  });

  it("translates revision conflicts for the reload prompt", async () => {
    const api = new FakeApi([]);
    const wb = new Workbench(api);
    wb.startDraft("Fake Topic", "fake-topic");
    wb.rememberPool([{ sid: "a.1", text: FIFTY_WORDS, distance: null, dissimilarity: null, closest: null }]);
    wb.addSentence("excerpt", "a.1");
    wb.addSentence("body", "a.1");
    // force the update path with a stale revision against a conflicting API
    wb.draftId = "draft-0001";
    wb.revision = 1;
    api.putDraft = async () => {
      throw new ApiError(409, "revision_conflict", "draft 'draft-0001' is at revision 2, not 1; reload and retry");
    };
    wb.overrideInvalid = true;
    await expect(wb.save()).rejects.toBeInstanceOf(ConflictError);
  });
});
