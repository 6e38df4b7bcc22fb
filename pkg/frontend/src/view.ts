import type { QueueController } from "./controller.js";
import type { Category, PairView } from "./types.js";
import { CATEGORIES } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text; // textContent keeps math/markup verbatim
  return node;
}

const CATEGORY_LABELS: Record<Category, string> = {
  duplicate: "1 · duplicate",
  "gray-area": "2 · gray-area",
  "similar-but-different": "3 · similar-but-different",
};

export class ReviewView {
  private noteInput: HTMLInputElement;

  constructor(
    private root: HTMLElement,
    private controller: QueueController,
  ) {
    this.noteInput = el("input");
    controller.onChange(() => this.render());
  }

  note(): string {
    return this.noteInput.value;
  }

  clearNote(): void {
    this.noteInput.value = "";
  }

  render(): void {
    const c = this.controller;
    this.root.textContent = "";
    this.root.append(this.header(), this.bannerBar(), this.filters());

    const pair = c.current();
    if (!c.loaded) {
      this.root.append(el("p", "hint", "loading queue..."));
      return;
    }
    if (!pair) {
      this.root.append(el("p", "empty-state", "no pending flags"));
      return;
    }
    this.root.append(this.pairPanel(pair), this.controls(pair));
  }

  private header(): HTMLElement {
    const c = this.controller;
    const header = el("header");
    header.append(el("h1", undefined, "contamination triage"));
    const stats = el("div", "progress");
    if (c.progress) {
      // every number here is a server response field
      const p = c.progress;
      stats.append(
        el("span", "stat", `pending ${p.pending}`),
        el("span", "stat", `decided ${p.decided}`),
        ...CATEGORIES.map((cat) =>
          el("span", `stat tag-${cat}`, `${cat} ${p.per_category[cat]}`),
        ),
      );
    }
    const pendingLeft = c.pairs.filter((p) => p.status === "pending").length;
    if (c.position >= 0 && pendingLeft > 0) {
      stats.append(el("span", "stat", `position ${c.position + 1} of ${c.pairs.length}`));
    }
    header.append(stats);
    return header;
  }

  private bannerBar(): HTMLElement {
    const banner = this.controller.banner;
    const bar = el("div", "banner-bar");
    if (!banner) return bar;
    if (banner.kind === "offline") {
      bar.append(el("div", "banner offline",
        `${banner.message} (${banner.queued} queued)`));
    } else if (banner.kind === "conflict") {
      bar.append(el("div", "banner conflict",
        `flag ${banner.flagId} was already decided: ${banner.existing.category} ` +
        `by ${banner.existing.reviewer}`));
    } else if (banner.kind === "committed") {
      bar.append(el("div", "banner committed",
        `recorded ${banner.category} for ${banner.flagId}`));
    } else {
      bar.append(el("div", "banner info", banner.message));
    }
    return bar;
  }

  private filters(): HTMLElement {
    const c = this.controller;
    const bar = el("div", "filters");
    const benchmarks = [...new Set(c.pairs.map((p) => p.benchmark))].sort();
    const sources = [...new Set(c.pairs.map((p) => p.train?.source ?? ""))]
      .filter(Boolean)
      .sort();
    bar.append(
      this.select("benchmark", benchmarks, c.filter.benchmark, (v) =>
        void c.load({ benchmark: v || undefined }),
      ),
      this.select("source", sources, c.filter.source, (v) =>
        void c.load({ source: v || undefined }),
      ),
    );
    return bar;
  }

  private select(
    label: string,
    options: string[],
    active: string | undefined,
    onPick: (value: string) => void,
  ): HTMLElement {
    const wrap = el("label", "filter", `${label}: `);
    const select = el("select");
    for (const option of ["", ...options]) {
      const node = el("option", undefined, option || "all");
      node.setAttribute("value", option);
      if (option === (active ?? "")) node.setAttribute("selected", "");
      select.append(node);
    }
    select.addEventListener("change", () => onPick(select.value));
    wrap.append(select);
    return wrap;
  }

  private pairPanel(pair: PairView): HTMLElement {
    const panel = el("section", "pair");
    const score = el("div", "score", `cosine similarity ${pair.score.toFixed(2)}`);
    if (pair.suggestion) {
      score.append(el("span", `suggestion tag-${pair.suggestion.category}`,
        ` suggested: ${pair.suggestion.category} — ${pair.suggestion.rationale}`));
    }
    const cards = el("div", "cards");
    cards.append(
      this.card("train", "card train", [
        ["question", pair.train?.instruction ?? "(missing record)"],
        ["answer", pair.train?.output ?? ""],
        ["source", pair.train?.source ?? ""],
      ]),
      this.card("test", "card test", [
        ["question", pair.test?.question ?? "(missing question)"],
        ["answer", pair.test?.answer ?? "(not provided)"],
        ["benchmark", pair.test?.benchmark ?? pair.benchmark],
      ]),
    );
    panel.append(score, cards);
    return panel;
  }

  private card(title: string, className: string, rows: Array<[string, string]>): HTMLElement {
    const card = el("article", className);
    card.append(el("h2", undefined, title));
    for (const [label, value] of rows) {
      const row = el("div", "field");
      row.append(el("span", "label", label), el("pre", "value", value));
      card.append(row);
    }
    return card;
  }

  private controls(pair: PairView): HTMLElement {
    const controls = el("div", "controls");
    for (const category of CATEGORIES) {
      const button = el("button", `decide tag-${category}`, CATEGORY_LABELS[category]);
      button.addEventListener("click", () => {
        const note = this.note().trim();
        this.clearNote();
        void this.controller.decide(category, note || undefined);
      });
      controls.append(button);
    }
    this.noteInput.placeholder = "optional note";
    this.noteInput.className = "note";
    controls.append(this.noteInput);
    controls.append(el("span", "hint", `flag ${pair.flag_id}`));
    return controls;
  }
}
