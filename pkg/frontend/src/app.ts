/**
 * Assembly studio UI: browse kept sentences per topic, drag or click them
 * into the excerpt and body, apply single-letter or single-word edits with
 * instant rule feedback, pick a title from body text, validate, publish.
 *
 * Plain DOM, no framework. The draft panel re-renders wholesale after
 * every mutation; at desk-tool scale that is simpler than bookkeeping.
 */

import { ApiClient, ApiError, PoolSentenceInfo, TopicInfo } from "./api.js";
import { ConflictError, PoolPager, PreviewBlockedError, Section, Workbench, noveltyBadge } from "./state.js";
import { EXCERPT_MAX_WORDS, EXCERPT_MIN_WORDS, RuleError, makeOp, splitWords } from "./rules.js";

const DRAG_TYPE = "text/x-sentence-id";

export interface AppHandles {
  api: ApiClient;
  workbench: Workbench;
  pager: PoolPager | null;
  root: HTMLElement;
  refreshTopics(): Promise<TopicInfo[]>;
  selectTopic(slug: string): Promise<void>;
  poolNext(): Promise<void>;
  poolPrev(): Promise<void>;
  addFromPool(section: Section, sid: string): void;
  applyEditForm(section: Section, index: number): void;
  pickTitle(bodyIndex: number, startToken: number, endToken: number): void;
  save(): Promise<void>;
  validate(): Promise<void>;
  publish(): Promise<void>;
  reloadDraft(): Promise<void>;
  renderDraft(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = ""
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function setStatus(root: HTMLElement, kind: "ok" | "err" | "info", text: string): void {
  const line = root.querySelector("#status-line") as HTMLElement;
  line.textContent = text;
  line.className = `status ${kind}`;
}

/** Read the dragged sentence id off a drop event, if one is attached. */
export function draggedSentenceId(ev: { dataTransfer: { getData(type: string): string } | null }): string | null {
  if (!ev.dataTransfer) return null;
  const sid = ev.dataTransfer.getData(DRAG_TYPE);
  return sid || null;
}

export function initApp(root: HTMLElement, api: ApiClient): AppHandles {
  const workbench = new Workbench(api);
  let pager: PoolPager | null = null;
  let topics: TopicInfo[] = [];
  let editTarget: { section: Section; index: number } | null = null;
  let titlePickIndex = -1;

  root.innerHTML = "";
  const layout = el("div", { class: "layout" });
  root.appendChild(layout);

  // ---- left column: topic + pool browser --------------------------------
  const poolPane = el("section", { class: "pane pool-pane" });
  layout.appendChild(poolPane);
  poolPane.appendChild(el("h2", {}, "Kept sentences"));
  const topicSelect = el("select", { id: "topic-select" });
  poolPane.appendChild(topicSelect);
  const poolRange = el("span", { id: "pool-range" });
  const poolPrev = el("button", { id: "pool-prev", type: "button" }, "Prev");
  const poolNext = el("button", { id: "pool-next", type: "button" }, "Next");
  const poolNav = el("div", { class: "pool-nav" });
  poolNav.append(poolPrev, poolRange, poolNext);
  poolPane.appendChild(poolNav);
  const poolList = el("ul", { id: "pool-list" });
  poolPane.appendChild(poolList);

  // ---- right column: draft panel ----------------------------------------
  const draftPane = el("section", { class: "pane draft-pane" });
  layout.appendChild(draftPane);
  draftPane.appendChild(el("h2", {}, "Draft"));
  const statusLine = el("div", { id: "status-line", class: "status info" }, "pick a topic to begin");
  draftPane.appendChild(statusLine);
  const conflictBanner = el("div", { id: "conflict-banner", class: "banner hidden" });
  const conflictText = el("span", { id: "conflict-text" });
  const reloadBtn = el("button", { id: "btn-reload", type: "button" }, "Reload draft");
  conflictBanner.append(conflictText, reloadBtn);
  draftPane.appendChild(conflictBanner);

  const titleRow = el("div", { class: "title-row" });
  titleRow.appendChild(el("strong", {}, "Title: "));
  const titleText = el("span", { id: "draft-title" }, "(none)");
  titleRow.appendChild(titleText);
  const clearTitleBtn = el("button", { id: "btn-clear-title", type: "button" }, "Clear");
  titleRow.appendChild(clearTitleBtn);
  draftPane.appendChild(titleRow);
  draftPane.appendChild(
    el("p", { class: "hint" }, "Titles are picked from body text: click a body sentence's Pick title, then its first and last word.")
  );
  const titlePicker = el("div", { id: "title-picker", class: "hidden" });
  draftPane.appendChild(titlePicker);

  const excerptHead = el("h3", {}, "Excerpt ");
  const wordMeter = el("span", { id: "word-meter" }, "0 words");
  excerptHead.appendChild(wordMeter);
  draftPane.appendChild(excerptHead);
  const excerptList = el("ol", { id: "excerpt-list", class: "entry-list" });
  draftPane.appendChild(excerptList);

  draftPane.appendChild(el("h3", {}, "Body"));
  const bodyList = el("ol", { id: "body-list", class: "entry-list" });
  draftPane.appendChild(bodyList);

  const editForm = el("div", { id: "edit-form", class: "hidden" });
  const editKind = el("select", { id: "edit-kind" });
  for (const kind of ["none", "delete_char", "replace_char", "delete_word", "replace_word"]) {
    editKind.appendChild(el("option", { value: kind }, kind));
  }
  const editPosition = el("input", { id: "edit-position", type: "number", min: "0", value: "0" });
  const editReplacement = el("input", { id: "edit-replacement", type: "text", placeholder: "replacement" });
  const editApply = el("button", { id: "edit-apply", type: "button" }, "Apply edit");
  const editCancel = el("button", { id: "edit-cancel", type: "button" }, "Close");
  const editVerdict = el("div", { id: "edit-verdict" });
  editForm.append(
    el("strong", {}, "Edit sentence "),
    editKind,
    editPosition,
    editReplacement,
    editApply,
    editCancel,
    editVerdict
  );
  draftPane.appendChild(editForm);

  const controls = el("div", { class: "controls" });
  const overrideLabel = el("label", { class: "override" });
  const overrideBox = el("input", { id: "chk-override", type: "checkbox" });
  overrideLabel.append(overrideBox, document.createTextNode(" submit even if the preview shows violations"));
  const saveBtn = el("button", { id: "btn-save", type: "button" }, "Save draft");
  const validateBtn = el("button", { id: "btn-validate", type: "button" }, "Validate");
  const publishBtn = el("button", { id: "btn-publish", type: "button" }, "Publish");
  controls.append(saveBtn, validateBtn, publishBtn, overrideLabel);
  draftPane.appendChild(controls);

  const verdictPanel = el("div", { id: "server-verdicts" });
  draftPane.appendChild(verdictPanel);
  const publishResult = el("div", { id: "publish-result", class: "hidden" });
  draftPane.appendChild(publishResult);

  // ---- rendering ---------------------------------------------------------

  function renderPool(): void {
    poolList.innerHTML = "";
    if (!pager) return;
    const end = pager.offset + pager.sentences.length;
    poolRange.textContent = pager.total
      ? `${pager.offset + 1}-${end} of ${pager.total}`
      : "pool is empty";
    (poolPrev as HTMLButtonElement).disabled = !pager.hasPrev();
    (poolNext as HTMLButtonElement).disabled = !pager.hasNext();
    for (const s of pager.sentences) {
      const li = el("li", { class: "pool-row", draggable: "true", "data-sid": s.sid });
      li.appendChild(el("span", { class: "pool-text" }, s.text));
      const badge = el("span", { class: "badge", title: s.closest ? `closest: ${s.closest}` : "no close match" });
      badge.textContent = noveltyBadge(s);
      li.appendChild(badge);
      const addExcerpt = el("button", { class: "add-excerpt", type: "button" }, "+ excerpt");
      const addBody = el("button", { class: "add-body", type: "button" }, "+ body");
      addExcerpt.onclick = () => handles.addFromPool("excerpt", s.sid);
      addBody.onclick = () => handles.addFromPool("body", s.sid);
      li.append(addExcerpt, addBody);
      li.addEventListener("dragstart", (ev) => {
        if (ev.dataTransfer) ev.dataTransfer.setData(DRAG_TYPE, s.sid);
      });
      poolList.appendChild(li);
    }
  }

  function entryRow(section: Section, index: number): HTMLElement {
    const entry = workbench.section(section)[index];
    const preview = workbench.entryPreview(section, index);
    const li = el("li", { class: "entry-row", "data-section": section, "data-index": String(index) });
    const text = preview.text === "" ? "(dropped)" : preview.text ?? "(unrenderable)";
    li.appendChild(el("span", { class: "entry-text" }, text));
    if (entry.op.kind !== "none") {
      li.appendChild(el("span", { class: "op-tag" }, entry.op.kind));
    }
    const verdictSpan = el("span", { class: "entry-verdict" });
    if (preview.error) {
      verdictSpan.textContent = preview.error;
      verdictSpan.classList.add("bad");
    } else if (preview.verdict && !preview.verdict.valid) {
      verdictSpan.textContent = preview.verdict.violations[0].message;
      verdictSpan.classList.add("bad");
    } else {
      verdictSpan.textContent = "ok";
      verdictSpan.classList.add("good");
    }
    li.appendChild(verdictSpan);

    const buttons = el("span", { class: "entry-buttons" });
    if (section === "excerpt") {
      const editBtn = el("button", { class: "entry-edit", type: "button" }, "Edit");
      editBtn.onclick = () => openEditForm(section, index);
      buttons.appendChild(editBtn);
    } else {
      const pickBtn = el("button", { class: "entry-pick-title", type: "button" }, "Pick title");
      pickBtn.onclick = () => openTitlePicker(index);
      buttons.appendChild(pickBtn);
    }
    const dropBtn = el("button", { class: "entry-drop", type: "button" }, entry.op.kind === "drop_sentence" ? "Undrop" : "Drop");
    dropBtn.onclick = () => {
      workbench.setOp(section, index, makeOp(entry.op.kind === "drop_sentence" ? "none" : "drop_sentence"));
      renderDraft();
    };
    const upBtn = el("button", { class: "entry-up", type: "button" }, "Up");
    upBtn.onclick = () => {
      workbench.moveEntry(section, index, index - 1);
      renderDraft();
    };
    const downBtn = el("button", { class: "entry-down", type: "button" }, "Down");
    downBtn.onclick = () => {
      workbench.moveEntry(section, index, index + 1);
      renderDraft();
    };
    const removeBtn = el("button", { class: "entry-remove", type: "button" }, "Remove");
    removeBtn.onclick = () => {
      workbench.removeEntry(section, index);
      renderDraft();
    };
    buttons.append(dropBtn, upBtn, downBtn, removeBtn);
    li.appendChild(buttons);
    return li;
  }

  function renderVerdicts(): void {
    verdictPanel.innerHTML = "";
    if (!workbench.lastVerdicts) return;
    verdictPanel.appendChild(el("h3", {}, "Server verdicts"));
    for (const [section, verdict] of Object.entries(workbench.lastVerdicts)) {
      const row = el("div", { class: `verdict ${verdict.valid ? "good" : "bad"}` });
      row.appendChild(el("strong", {}, `${section}: `));
      row.appendChild(
        el("span", {}, verdict.valid ? "valid" : verdict.violations.map((v) => `${v.where || section}: ${v.message}`).join("; "))
      );
      verdictPanel.appendChild(row);
    }
  }

  function renderDraft(): void {
    titleText.textContent = workbench.title || "(none)";
    excerptList.innerHTML = "";
    workbench.excerpt.forEach((_, i) => excerptList.appendChild(entryRow("excerpt", i)));
    bodyList.innerHTML = "";
    workbench.body.forEach((_, i) => bodyList.appendChild(entryRow("body", i)));
    const words = workbench.excerptWords();
    wordMeter.textContent = `${words} words`;
    wordMeter.className = words >= EXCERPT_MIN_WORDS && words <= EXCERPT_MAX_WORDS ? "good" : "bad";
    const previewOk = workbench.previewValid();
    (saveBtn as HTMLButtonElement).disabled =
      workbench.topic === "" || (!previewOk && !workbench.overrideInvalid);
    (validateBtn as HTMLButtonElement).disabled = workbench.topic === "";
    (publishBtn as HTMLButtonElement).disabled = !workbench.canPublish();
    renderVerdicts();
  }

  function openEditForm(section: Section, index: number): void {
    editTarget = { section, index };
    editForm.classList.remove("hidden");
    editVerdict.textContent = "";
    const op = workbench.section(section)[index].op;
    (editKind as HTMLSelectElement).value = op.kind in { none: 1, delete_char: 1, replace_char: 1, delete_word: 1, replace_word: 1 } ? op.kind : "none";
    (editPosition as HTMLInputElement).value = String(op.position ?? 0);
    (editReplacement as HTMLInputElement).value = op.replacement ?? "";
  }

  function closeEditForm(): void {
    editTarget = null;
    editForm.classList.add("hidden");
  }

  function openTitlePicker(bodyIndex: number): void {
    titlePickIndex = bodyIndex;
    titlePicker.innerHTML = "";
    titlePicker.classList.remove("hidden");
    const entry = workbench.body[bodyIndex];
    const pooled = workbench.poolSentence(entry.sentence_id);
    if (!pooled) return;
    const tokens = splitWords(pooled.text);
    let start = -1;
    titlePicker.appendChild(el("p", { class: "hint" }, "click first word, then last word"));
    tokens.forEach((tok, ti) => {
      const btn = el("button", { class: "title-token", type: "button", "data-token": String(ti) }, tok);
      btn.onclick = () => {
        if (start < 0) {
          start = ti;
          btn.classList.add("picked");
        } else {
          const lo = Math.min(start, ti);
          const hi = Math.max(start, ti);
          handles.pickTitle(titlePickIndex, lo, hi + 1);
          titlePicker.classList.add("hidden");
        }
      };
      titlePicker.appendChild(btn);
    });
  }

  function showConflict(err: ConflictError): void {
    conflictText.textContent = `${err.message} `;
    conflictBanner.classList.remove("hidden");
    setStatus(root, "err", "the draft changed on the server; reload to continue");
  }

  async function guarded(action: () => Promise<void>): Promise<void> {
    try {
      await action();
    } catch (err) {
      if (err instanceof ConflictError) showConflict(err);
      else if (err instanceof PreviewBlockedError || err instanceof RuleError) {
        setStatus(root, "err", err.message);
      } else if (err instanceof ApiError) {
        setStatus(root, "err", `${err.code}: ${err.message}`);
      } else throw err;
    }
  }

  // ---- handles (the same functions the buttons call) ---------------------

  const handles: AppHandles = {
    api,
    workbench,
    get pager() {
      return pager;
    },
    root,
    async refreshTopics() {
      const res = await api.topics();
      topics = res.topics;
      topicSelect.innerHTML = "";
      topicSelect.appendChild(el("option", { value: "" }, "choose a topic"));
      for (const t of topics) {
        const label = t.pool ? t.name : `${t.name} (no pool yet)`;
        topicSelect.appendChild(el("option", { value: t.slug }, label));
      }
      return topics;
    },
    async selectTopic(slug: string) {
      const topic = topics.find((t) => t.slug === slug);
      if (!topic) throw new RuleError(`unknown topic slug ${slug}`);
      (topicSelect as HTMLSelectElement).value = slug;
      workbench.startDraft(topic.name, slug);
      publishResult.classList.add("hidden");
      conflictBanner.classList.add("hidden");
      pager = new PoolPager(api, slug);
      await pager.load(0);
      workbench.rememberPool(pager.sentences);
      renderPool();
      renderDraft();
      setStatus(root, "info", `editing a new ${topic.name} draft`);
    },
    async poolNext() {
      if (!pager || !pager.hasNext()) return;
      await pager.next();
      workbench.rememberPool(pager.sentences);
      renderPool();
    },
    async poolPrev() {
      if (!pager || !pager.hasPrev()) return;
      await pager.prev();
      workbench.rememberPool(pager.sentences);
      renderPool();
    },
    addFromPool(section: Section, sid: string) {
      workbench.addSentence(section, sid);
      renderDraft();
    },
    applyEditForm(section: Section, index: number) {
      const kind = (editKind as HTMLSelectElement).value;
      const positionRaw = (editPosition as HTMLInputElement).value;
      const replacementRaw = (editReplacement as HTMLInputElement).value;
      let op;
      if (kind === "none") {
        op = makeOp("none");
      } else if (kind === "delete_char" || kind === "delete_word") {
        op = makeOp(kind, Number(positionRaw));
      } else {
        op = makeOp(kind, Number(positionRaw), replacementRaw);
      }
      workbench.setOp(section, index, op);
      const preview = workbench.entryPreview(section, index);
      if (preview.error) {
        editVerdict.textContent = preview.error;
        editVerdict.className = "bad";
      } else if (preview.verdict && !preview.verdict.valid) {
        editVerdict.textContent = preview.verdict.violations[0].message;
        editVerdict.className = "bad";
      } else {
        editVerdict.textContent = "valid";
        editVerdict.className = "good";
      }
      renderDraft();
    },
    pickTitle(bodyIndex: number, startToken: number, endToken: number) {
      workbench.setTitleFromBodySpan(bodyIndex, startToken, endToken);
      renderDraft();
    },
    async save() {
      await guarded(async () => {
        await workbench.save();
        renderDraft();
        setStatus(root, "ok", `saved ${workbench.draftId} at revision ${workbench.revision}`);
      });
    },
    async validate() {
      await guarded(async () => {
        const verdicts = await workbench.validate();
        renderDraft();
        const ok = Object.values(verdicts).every((v) => v.valid);
        setStatus(root, ok ? "ok" : "err", ok ? "draft is valid" : "draft has rule violations");
      });
    },
    async publish() {
      await guarded(async () => {
        const result = await workbench.publish();
        renderDraft();
        publishResult.classList.remove("hidden");
        publishResult.innerHTML = "";
        publishResult.appendChild(el("strong", {}, "Published: "));
        publishResult.appendChild(el("span", { id: "published-page" }, result.page));
        setStatus(root, "ok", `published as ${result.slug}`);
      });
    },
    async reloadDraft() {
      if (!workbench.draftId) return;
      const res = await api.getDraft(workbench.draftId);
      workbench.loadResource(res);
      conflictBanner.classList.add("hidden");
      renderDraft();
      setStatus(root, "info", `reloaded ${res.id} at revision ${res.revision}`);
    },
    renderDraft,
  };

  // ---- wiring -------------------------------------------------------------

  topicSelect.addEventListener("change", () => {
    const slug = (topicSelect as HTMLSelectElement).value;
    if (slug) void handles.selectTopic(slug);
  });
  poolPrev.onclick = () => void handles.poolPrev();
  poolNext.onclick = () => void handles.poolNext();
  saveBtn.onclick = () => void handles.save();
  validateBtn.onclick = () => void handles.validate();
  publishBtn.onclick = () => void handles.publish();
  reloadBtn.onclick = () => void handles.reloadDraft();
  clearTitleBtn.onclick = () => {
    workbench.clearTitle();
    renderDraft();
  };
  overrideBox.addEventListener("change", () => {
    workbench.overrideInvalid = (overrideBox as HTMLInputElement).checked;
    renderDraft();
  });
  editApply.onclick = () => {
    if (editTarget) handles.applyEditForm(editTarget.section, editTarget.index);
  };
  editCancel.onclick = closeEditForm;
  for (const [list, section] of [
    [excerptList, "excerpt"],
    [bodyList, "body"],
  ] as Array<[HTMLElement, Section]>) {
    list.addEventListener("dragover", (ev) => ev.preventDefault());
    list.addEventListener("drop", (ev) => {
      ev.preventDefault();
      const sid = draggedSentenceId(ev as unknown as { dataTransfer: { getData(t: string): string } | null });
      if (sid) handles.addFromPool(section, sid);
    });
  }

  void handles.refreshTopics();
  renderDraft();
  return handles;
}

// Boot only inside the served page; tests build their own root and client.
if (typeof document !== "undefined" && document.getElementById("app")) {
  initApp(document.getElementById("app") as HTMLElement, new ApiClient());
}
