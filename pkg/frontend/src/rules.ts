/**
 * Client-side mirror of the server's draft validation rules.
 *
 * The service is the authority; this module exists so the editor gets
 * instant feedback without a round trip. Verdicts here must match the
 * server's byte for byte (rule names, messages, where-labels), which the
 * parity fixture in test/fixtures/parity_cases.json pins down. All string
 * indexing is done over Unicode code points to line up with the server's
 * Python string semantics.
 */

export interface EditOpJson {
  kind: string;
  position?: number;
  replacement?: string;
}

export interface ManifestEntryJson {
  sentence_id: string;
  op: EditOpJson;
}

export interface ImageJson {
  url: string;
  author: string;
  work_title: string;
}

export interface ManifestJson {
  id: string;
  topic: string;
  title: string;
  excerpt: ManifestEntryJson[];
  body: ManifestEntryJson[];
  image: ImageJson | null;
  status: string;
}

export interface ViolationJson {
  rule: string;
  message: string;
  where: string;
}

export interface VerdictJson {
  valid: boolean;
  violations: ViolationJson[];
}

export interface VerdictMap {
  [section: string]: VerdictJson;
}

export interface PoolText {
  sid: string;
  text: string;
}

export const EDIT_KINDS = [
  "none",
  "delete_char",
  "replace_char",
  "delete_word",
  "replace_word",
  "drop_sentence",
  "reorder",
] as const;

export const TEXT_EDIT_KINDS = new Set(["delete_char", "replace_char", "delete_word", "replace_word"]);
export const BODY_KINDS = new Set(["none", "drop_sentence"]);

export const EXCERPT_MIN_WORDS = 50;
export const EXCERPT_MAX_WORDS = 100;

export const PUNCT = new Set([".", ",", "!", "?", ";", ":", '"', "(", ")", "'"]);

const SPACE_RE = /\s/;

export class RuleError extends Error {}

function isSpace(ch: string): boolean {
  return SPACE_RE.test(ch);
}

/** Split into Unicode code points, the unit the server indexes by. */
export function toChars(text: string): string[] {
  return Array.from(text);
}

/** Code-point spans of each token; punctuation marks stand alone. */
export function wordSpans(text: string): Array<[number, number]> {
  const chars = toChars(text);
  const spans: Array<[number, number]> = [];
  let i = 0;
  while (i < chars.length) {
    if (isSpace(chars[i])) {
      i += 1;
    } else if (PUNCT.has(chars[i])) {
      spans.push([i, i + 1]);
      i += 1;
    } else {
      let j = i;
      while (j < chars.length && !isSpace(chars[j]) && !PUNCT.has(chars[j])) j += 1;
      spans.push([i, j]);
      i = j;
    }
  }
  return spans;
}

/** Case-preserving token split; same boundaries the edit rules use. */
export function splitWords(text: string): string[] {
  const chars = toChars(text);
  return wordSpans(text).map(([s, e]) => chars.slice(s, e).join(""));
}

/** Whitespace word count, matching the server's str.split(). */
export function countWords(text: string): number {
  return text.split(/\s+/).filter((w) => w.length > 0).length;
}

/** Python repr() of a string, as it appears inside server messages. */
export function pyRepr(s: string): string {
  const quote = s.includes("'") && !s.includes('"') ? '"' : "'";
  let out = quote;
  for (const ch of s) {
    if (ch === "\\" || ch === quote) out += "\\" + ch;
    else if (ch === "\n") out += "\\n";
    else if (ch === "\r") out += "\\r";
    else if (ch === "\t") out += "\\t";
    else out += ch;
  }
  return out + quote;
}

/** Construct an edit op, enforcing the same shape rules the server parses by. */
export function makeOp(kind: string, position?: number, replacement?: string): EditOpJson {
  if (!(EDIT_KINDS as readonly string[]).includes(kind)) {
    throw new RuleError(`unknown edit kind ${pyRepr(kind)}`);
  }
  const positional = TEXT_EDIT_KINDS.has(kind);
  if (positional) {
    if (position === undefined || position < 0 || !Number.isInteger(position)) {
      throw new RuleError(`${kind} requires a non-negative position`);
    }
  } else if (position !== undefined || replacement !== undefined) {
    throw new RuleError(`${kind} carries no position or replacement`);
  }
  if (kind === "replace_char" || kind === "replace_word") {
    if (!replacement) throw new RuleError(`${kind} requires a replacement`);
  } else if (positional && replacement !== undefined) {
    throw new RuleError(`${kind} carries no replacement`);
  }
  const op: EditOpJson = { kind };
  if (position !== undefined) op.position = position;
  if (replacement !== undefined) op.replacement = replacement;
  return op;
}

/**
 * Apply an edit to a sentence, returning the edited text. Throws RuleError
 * with the server's exact message when the op does not fit the sentence.
 */
export function applyEdit(original: string, op: EditOpJson): string {
  if (op.kind === "none" || op.kind === "reorder") return original;
  if (op.kind === "drop_sentence") throw new RuleError("dropped sentences render no text");
  const chars = toChars(original);
  const pos = op.position ?? -1;
  if (op.kind === "delete_char" || op.kind === "replace_char") {
    if (pos >= chars.length) {
      throw new RuleError(
        `character position ${pos} out of range for a ${chars.length}-character sentence`
      );
    }
    if (op.kind === "delete_char") {
      return chars.slice(0, pos).concat(chars.slice(pos + 1)).join("");
    }
    return chars.slice(0, pos).join("") + (op.replacement ?? "") + chars.slice(pos + 1).join("");
  }
  const spans = wordSpans(original);
  if (pos >= spans.length) {
    throw new RuleError(
      `word position ${pos} out of range for a ${spans.length}-token sentence`
    );
  }
  const [start, end] = spans[pos];
  if (op.kind === "replace_word") {
    // Keep token boundaries intact at both seams: replacing a flush
    // punctuation mark with a word must not merge it into a neighbor.
    const left = chars.slice(0, start);
    const right = chars.slice(end);
    let repl = op.replacement ?? "";
    const replChars = toChars(repl);
    const leftLast = left[left.length - 1];
    if (left.length && !isSpace(leftLast) && !PUNCT.has(leftLast) && !PUNCT.has(replChars[0])) {
      repl = " " + repl;
    }
    const replLast = toChars(repl)[toChars(repl).length - 1];
    if (right.length && !isSpace(right[0]) && !PUNCT.has(right[0]) && !PUNCT.has(replLast)) {
      repl = repl + " ";
    }
    return left.join("") + repl + right.join("");
  }
  // delete_word: join the two sides without doubling spaces or gluing two
  // word tokens together; a punctuation char at the seam keeps tokens apart.
  const left = chars.slice(0, start).join("").trimEnd();
  const right = chars.slice(end).join("").trimStart();
  if (!left) return right;
  if (!right) return left;
  const leftLast = toChars(left).pop() as string;
  const rightFirst = toChars(right)[0];
  if (PUNCT.has(leftLast) || PUNCT.has(rightFirst)) return left + right;
  return left + " " + right;
}

function sliceEq<T>(a: T[], ai: number, b: T[], bi: number): boolean {
  if (a.length - ai !== b.length - bi) return false;
  for (let k = 0; ai + k < a.length; k += 1) {
    if (a[ai + k] !== b[bi + k]) return false;
  }
  return true;
}

/** True iff b is a with exactly one item deleted or substituted. */
export function oneItemEdit<T>(a: T[], b: T[]): boolean {
  if (b.length === a.length - 1) {
    let i = 0;
    while (i < b.length && a[i] === b[i]) i += 1;
    return sliceEq(a, i + 1, b, i);
  }
  if (b.length === a.length && a.length > 0) {
    let diff = 0;
    for (let i = 0; i < a.length; i += 1) {
      if (a[i] !== b[i]) diff += 1;
    }
    return diff === 1;
  }
  return false;
}

const SINGLE_EDIT_MESSAGE =
  "sentence differs from its source by more than one character or word deletion/substitution";

/**
 * Check that edited differs from original by at most one allowed edit:
 * identical text, one character deleted or substituted, or one word
 * deleted or substituted. Insertions always fail.
 */
export function validateSentenceEdit(original: string, edited: string): VerdictJson {
  if (edited === original) return { valid: true, violations: [] };
  if (oneItemEdit(toChars(original), toChars(edited))) return { valid: true, violations: [] };
  if (oneItemEdit(splitWords(original), splitWords(edited))) return { valid: true, violations: [] };
  return {
    valid: false,
    violations: [{ rule: "single_edit", message: SINGLE_EDIT_MESSAGE, where: "sentence" }],
  };
}

/** Sentence texts keyed by id, the slice of the pool the rules consult. */
export class RulePool {
  private byId = new Map<string, string>();

  constructor(sentences: Iterable<PoolText>) {
    for (const s of sentences) this.byId.set(s.sid, s.text);
  }

  has(sid: string): boolean {
    return this.byId.has(sid);
  }

  text(sid: string): string {
    const t = this.byId.get(sid);
    if (t === undefined) throw new RuleError(`unknown sentence id ${pyRepr(sid)}`);
    return t;
  }

  texts(): IterableIterator<string> {
    return this.byId.values();
  }
}

interface EntryCheckResult {
  violations: ViolationJson[];
  rendered: Array<{ entry: ManifestEntryJson; text: string }>;
}

function entryChecks(
  entries: ManifestEntryJson[],
  pool: RulePool,
  section: string,
  allowedKinds: Set<string> | null
): EntryCheckResult {
  const violations: ViolationJson[] = [];
  const rendered: Array<{ entry: ManifestEntryJson; text: string }> = [];
  const seen = new Set<string>();
  entries.forEach((entry, i) => {
    const where = `${section}[${i}]`;
    if (allowedKinds !== null && !allowedKinds.has(entry.op.kind)) {
      violations.push({
        rule: "body_edit",
        message: `body sentences must be verbatim; ${entry.op.kind} is not allowed`,
        where,
      });
      return;
    }
    if (seen.has(entry.sentence_id)) {
      violations.push({
        rule: "duplicate_sentence",
        message: `sentence ${pyRepr(entry.sentence_id)} appears more than once in the ${section}`,
        where,
      });
      return;
    }
    seen.add(entry.sentence_id);
    if (!pool.has(entry.sentence_id)) {
      violations.push({
        rule: "unknown_sentence",
        message: `sentence ${pyRepr(entry.sentence_id)} is not in the kept pool`,
        where,
      });
      return;
    }
    if (entry.op.kind === "drop_sentence") return;
    const original = pool.text(entry.sentence_id);
    let edited: string;
    try {
      edited = applyEdit(original, entry.op);
    } catch (err) {
      if (err instanceof RuleError) {
        violations.push({ rule: "op_invalid", message: err.message, where });
        return;
      }
      throw err;
    }
    const verdict = validateSentenceEdit(original, edited);
    if (!verdict.valid) {
      violations.push({ rule: "single_edit", message: verdict.violations[0].message, where });
    }
    // A rule-violating but applicable edit still has text: keep it so the
    // word count reflects what the editor sees.
    rendered.push({ entry, text: edited });
  });
  return { violations, rendered };
}

/** Whitespace-word count of the rendered excerpt, drops excluded. */
export function excerptWordCount(manifest: ManifestJson, pool: RulePool): number {
  const { rendered } = entryChecks(manifest.excerpt, pool, "excerpt", null);
  return rendered.reduce((n, r) => n + countWords(r.text), 0);
}

/** Excerpt rule: single edits only and 50-100 rendered words. */
export function validateExcerpt(manifest: ManifestJson, pool: RulePool): VerdictJson {
  const { violations, rendered } = entryChecks(manifest.excerpt, pool, "excerpt", null);
  if (rendered.length === 0 && violations.length === 0) {
    violations.push({ rule: "empty_excerpt", message: "excerpt has no sentences", where: "excerpt" });
  } else if (rendered.length > 0) {
    const words = rendered.reduce((n, r) => n + countWords(r.text), 0);
    if (words < EXCERPT_MIN_WORDS || words > EXCERPT_MAX_WORDS) {
      violations.push({
        rule: "word_count",
        message: `excerpt has ${words} words; allowed range is ${EXCERPT_MIN_WORDS}-${EXCERPT_MAX_WORDS}`,
        where: "excerpt",
      });
    }
  }
  return { valid: violations.length === 0, violations };
}

/** Body rule: verbatim pool sentences only; drops allowed. */
export function validateBody(manifest: ManifestJson, pool: RulePool): VerdictJson {
  const { violations, rendered } = entryChecks(manifest.body, pool, "body", BODY_KINDS);
  if (rendered.length === 0 && violations.length === 0) {
    violations.push({ rule: "empty_body", message: "body has no sentences", where: "body" });
  }
  return { valid: violations.length === 0, violations };
}

function stripPunctTokens(tokens: string[]): string[] {
  let lo = 0;
  let hi = tokens.length;
  while (lo < hi && PUNCT.has(tokens[lo])) lo += 1;
  while (hi > lo && PUNCT.has(tokens[hi - 1])) hi -= 1;
  return tokens.slice(lo, hi);
}

/**
 * Title rule: a contiguous token run of some pool sentence. Comparison is
 * case-insensitive and ignores punctuation at the title's edges; interior
 * punctuation must match the source.
 */
export function validateTitle(manifest: ManifestJson, pool: RulePool): VerdictJson {
  const tokens = stripPunctTokens(splitWords(manifest.title).map((t) => t.toLowerCase()));
  if (tokens.length === 0) {
    return {
      valid: false,
      violations: [{ rule: "empty_title", message: "title has no words", where: "title" }],
    };
  }
  const n = tokens.length;
  for (const text of pool.texts()) {
    const hay = splitWords(text).map((t) => t.toLowerCase());
    for (let i = 0; i + n <= hay.length; i += 1) {
      if (sliceEq(hay.slice(i, i + n), 0, tokens, 0)) return { valid: true, violations: [] };
    }
  }
  return {
    valid: false,
    violations: [
      {
        rule: "title_source",
        message: "title is not a contiguous token run of any kept-pool sentence",
        where: "title",
      },
    ],
  };
}

/** All three section verdicts keyed 'title' / 'excerpt' / 'body'. */
export function manifestVerdicts(manifest: ManifestJson, pool: RulePool): VerdictMap {
  return {
    title: validateTitle(manifest, pool),
    excerpt: validateExcerpt(manifest, pool),
    body: validateBody(manifest, pool),
  };
}

export function allValid(verdicts: VerdictMap): boolean {
  return Object.values(verdicts).every((v) => v.valid);
}
