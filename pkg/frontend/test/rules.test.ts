/**
 * Rule-mirror unit tests. The heart is the parity sweep: every case in
 * the frozen fixture must produce, from the client mirror, exactly the
 * verdicts the server recorded (rule names, messages, where-labels).
 * The Python acceptance gate replays the same fixture against the live
 * service, so agreement here is agreement with the running server.
 */

import { describe, expect, it } from "vitest";
import {
  RulePool,
  applyEdit,
  countWords,
  makeOp,
  manifestVerdicts,
  pyRepr,
  splitWords,
  validateSentenceEdit,
  validateTitle,
  wordSpans,
  RuleError,
  ManifestJson,
} from "../src/rules.js";
import fixture from "./fixtures/parity_cases.json";

const pool = new RulePool(fixture.pool);

function manifestOf(parts: Partial<ManifestJson>): ManifestJson {
  return {
    id: "t-1",
    topic: "parity",
    title: "harbor committee approved",
    excerpt: [],
    body: [{ sentence_id: "px02", op: { kind: "none" } }],
    image: null,
    status: "draft",
    ...parts,
  };
}

describe("parity fixture", () => {
  it("reproduces every server verdict byte for byte", () => {
    for (const c of fixture.cases) {
      const got = manifestVerdicts(c.manifest as ManifestJson, pool);
      expect(got, `case ${c.label}`).toEqual(c.expected);
    }
  });

  it("covers all violation rules and some fully valid drafts", () => {
    const rules = new Set<string>();
    let valid = 0;
    for (const c of fixture.cases) {
      const sections = Object.values(c.expected);
      if (sections.every((v) => v.valid)) valid += 1;
      for (const v of sections) for (const viol of v.violations) rules.add(viol.rule);
    }
    expect(valid).toBeGreaterThan(0);
    for (const rule of [
      "single_edit",
      "word_count",
      "body_edit",
      "duplicate_sentence",
      "unknown_sentence",
      "op_invalid",
      "empty_excerpt",
      "empty_body",
      "empty_title",
      "title_source",
    ]) {
      expect(rules, `fixture exercises ${rule}`).toContain(rule);
    }
  });
});

describe("tokenization", () => {
  it("gives punctuation marks their own tokens", () => {
    expect(splitWords('The plan "ambitious" won.')).toEqual([
      "The", "plan", '"', "ambitious", '"', "won", ".",
    ]);
  });

  it("splits possessives at the apostrophe", () => {
    expect(splitWords("director's report")).toEqual(["director", "'", "s", "report"]);
  });

  it("spans index by code point", () => {
    const spans = wordSpans("café bar");
    expect(spans).toEqual([
      [0, 4],
      [5, 8],
    ]);
  });

  it("counts whitespace words like the server", () => {
    expect(countWords("  a  b\tc \n")).toBe(3);
    expect(countWords("")).toBe(0);
  });
});

describe("single-edit checking", () => {
  const base = "The quick brown fox jumps over the lazy dog.";

  it("accepts identical text", () => {
    expect(validateSentenceEdit(base, base).valid).toBe(true);
  });

  it("accepts one char deleted or substituted", () => {
    expect(validateSentenceEdit(base, base.replace("quick", "qick")).valid).toBe(true);
    expect(validateSentenceEdit(base, base.replace("quick", "quack")).valid).toBe(true);
  });

  it("accepts one whole-word substitution even with several char changes", () => {
    expect(validateSentenceEdit(base, base.replace("brown", "purple")).valid).toBe(true);
  });

  it("rejects insertions and multi-word changes with the server message", () => {
    const v = validateSentenceEdit(base, base.replace("fox", "fox really"));
    expect(v.valid).toBe(false);
    expect(v.violations[0].message).toBe(
      "sentence differs from its source by more than one character or word deletion/substitution"
    );
    expect(validateSentenceEdit(base, base.replace("quick", "slow").replace("lazy", "busy")).valid).toBe(false);
  });
});

describe("edit application", () => {
  it("keeps seams intact when replacing a flush punctuation token", () => {
    expect(applyEdit("Storms delayed the convoy.", { kind: "replace_word", position: 4, replacement: "now" })).toBe(
      "Storms delayed the convoy now"
    );
  });

  it("joins cleanly when deleting a word", () => {
    expect(applyEdit("Storms delayed the convoy.", { kind: "delete_word", position: 0 })).toBe(
      "delayed the convoy."
    );
    expect(applyEdit("Storms delayed the convoy.", { kind: "delete_word", position: 3 })).toBe(
      "Storms delayed the."
    );
  });

  it("reports out-of-range positions with the server message", () => {
    expect(() => applyEdit("abc", { kind: "delete_char", position: 3 })).toThrowError(
      "character position 3 out of range for a 3-character sentence"
    );
  });
});

describe("word-count boundary", () => {
  function nWords(n: number): string {
    return Array.from({ length: n }, (_, i) => `w${i}`).join(" ") + " end.";
  }

  function excerptVerdict(sentence: string) {
    const p = new RulePool([{ sid: "s1", text: sentence }]);
    const m = manifestOf({ excerpt: [{ sentence_id: "s1", op: { kind: "none" } }], body: [] });
    return manifestVerdicts(m, p).excerpt;
  }

  it("turns valid at exactly 50 and stays valid through 100", () => {
    expect(excerptVerdict(nWords(48)).violations[0].rule).toBe("word_count");
    expect(excerptVerdict(nWords(49)).valid).toBe(true);
    expect(excerptVerdict(nWords(99)).valid).toBe(true);
    expect(excerptVerdict(nWords(100)).violations[0].rule).toBe("word_count");
  });
});

describe("title rule", () => {
  it("accepts a verbatim span and rejects free-typed text", () => {
    const ok = manifestOf({ title: "harbor committee approved the expanded" });
    expect(validateTitle(ok, pool).valid).toBe(true);
    const bad = manifestOf({ title: "a headline nobody wrote" });
    expect(validateTitle(bad, pool).violations[0].rule).toBe("title_source");
  });

  it("ignores case and edge punctuation but not interior punctuation", () => {
    const quoted = manifestOf({ title: '"Ambitious" and promised funding' });
    expect(validateTitle(quoted, pool).valid).toBe(true);
    const crossing = manifestOf({ title: "short debate. Officials said" });
    expect(validateTitle(crossing, pool).valid).toBe(false);
  });
});

describe("op construction", () => {
  it("enforces the server's shape rules", () => {
    expect(makeOp("delete_char", 3)).toEqual({ kind: "delete_char", position: 3 });
    expect(() => makeOp("delete_char")).toThrow(RuleError);
    expect(() => makeOp("replace_word", 1)).toThrow(RuleError);
    expect(() => makeOp("none", 2)).toThrow(RuleError);
    expect(() => makeOp("drop_sentence", undefined, "x")).toThrow(RuleError);
  });
});

describe("python repr", () => {
  it("matches the quoting the server uses in messages", () => {
    expect(pyRepr("gen-1.4")).toBe("'gen-1.4'");
    expect(pyRepr("it's")).toBe('"it\'s"');
    expect(pyRepr('say "hi"')).toBe("'say \"hi\"'");
  });
});
