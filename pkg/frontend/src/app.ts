/**
 * Annotation voting UI: a single-card state machine.
 *
 * Flow: login -> card (blind: sentence + choice buttons only) -> reveal
 * (your vote next to the original and revised labels) -> next card -> done
 * screen with live agreement statistics.
 *
 * Votes are at-most-once on two levels: the submit handler ignores clicks
 * while a vote is in flight (and disables the buttons), and the service
 * itself answers 409 for duplicates, which the UI reports without logging
 * anything twice.
 */

import { ApiClient, ApiError, Progress, RecordPayload, RevealedRecord, StatsResponse } from "./api.js";

/** 0.66 -> "66%"; null (no votes yet) -> "n/a". */
export function formatPercent(rate: number | null): string {
  if (rate === null) {
    return "n/a";
  }
  return `${Math.round(rate * 100)}%`;
}

function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") {
      node.className = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  node.append(...children);
  return node;
}

function sentenceWithAspect(record: RecordPayload): HTMLElement {
  const line = h("p", { class: "sentence", "data-testid": "sentence" });
  record.words.forEach((word, i) => {
    if (i > 0) {
      line.append(" ");
    }
    if (i === record.aspect_index) {
      line.append(h("mark", { class: "aspect", "data-testid": "aspect" }, word));
    } else {
      line.append(word);
    }
  });
  return line;
}

export interface App {
  start(annotator: string): Promise<void>;
  loadNext(): Promise<void>;
  submit(label: number): Promise<void>;
  showStats(): Promise<void>;
  readonly annotator: string;
}

export function createApp(root: HTMLElement, client: ApiClient): App {
  let annotator = "";
  let current: RecordPayload | null = null;
  let progress: Progress = { voted: 0, total: 0 };
  let submitting = false;

  // -- views ------------------------------------------------------------

  function renderLogin(message = ""): void {
    const input = h("input", {
      type: "text",
      id: "annotator",
      "data-testid": "annotator-input",
      placeholder: "annotator id",
      autocomplete: "off",
    });
    const button = h("button", { "data-testid": "start", type: "submit" }, "Start voting");
    const form = h("form", { class: "login" }, h("label", { for: "annotator" }, "Who is voting?"), input, button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void start(input.value);
    });
    root.replaceChildren(
      h("h1", {}, "Label review"),
      h(
        "p",
        { class: "hint" },
        "You will see sentences whose labels changed between annotation rounds. ",
        "Pick the label you find correct; the stored labels stay hidden until you vote.",
      ),
      form,
      message ? h("p", { class: "error", "data-testid": "error" }, message) : "",
    );
  }

  function header(): HTMLElement {
    const statsButton = h("button", { class: "link", "data-testid": "nav-stats", type: "button" }, "Statistics");
    statsButton.addEventListener("click", () => void showStats());
    return h(
      "header",
      {},
      h("span", { class: "who" }, `annotator: ${annotator}`),
      h(
        "span",
        { class: "progress", "data-testid": "progress" },
        `reviewed ${progress.voted} of ${progress.total}`,
      ),
      statsButton,
    );
  }

  function renderCard(): void {
    if (!current) {
      return;
    }
    const record = current;
    const buttons = record.class_names.map((name, label) => {
      const button = h(
        "button",
        { class: "vote", "data-testid": `vote-${label}`, "data-label": String(label), type: "button" },
        name,
      );
      button.addEventListener("click", () => void submit(label));
      return button;
    });
    root.replaceChildren(
      header(),
      h(
        "section",
        { class: "card", "data-testid": "card" },
        h("p", { class: "meta" }, `${record.dataset} · ${record.record_id}`),
        sentenceWithAspect(record),
        h("p", { class: "ask" }, `How would you label “${record.aspect}” here?`),
        h("div", { class: "choices" }, ...buttons),
        h("p", { class: "hint" }, "The stored labels are revealed after your vote is saved."),
      ),
    );
  }

  function revealPanel(revealed: RevealedRecord, myLabel: number | null, note: string): HTMLElement {
    const name = (label: number | null): string =>
      label === null ? "—" : revealed.class_names[label] ?? String(label);
    const rows: HTMLElement[] = [];
    if (myLabel !== null) {
      rows.push(h("li", {}, "Your vote: ", h("strong", { "data-testid": "my-label" }, name(myLabel))));
    }
    rows.push(
      h("li", {}, "Original label: ", h("strong", { "data-testid": "original-label" }, name(revealed.original_label))),
      h("li", {}, "Revised label: ", h("strong", { "data-testid": "revised-label" }, name(revealed.revised_label))),
    );
    const nextButton = h("button", { "data-testid": "next", type: "button" }, "Next sentence");
    nextButton.addEventListener("click", () => void loadNext());
    return h(
      "section",
      { class: "reveal", "data-testid": "reveal" },
      note ? h("p", { class: "notice", "data-testid": "notice" }, note) : "",
      h("ul", {}, ...rows),
      nextButton,
    );
  }

  function renderReveal(revealed: RevealedRecord, myLabel: number | null, note = ""): void {
    progress = { ...progress, voted: Math.min(progress.voted + 1, progress.total) };
    if (!current) {
      return;
    }
    root.replaceChildren(
      header(),
      h(
        "section",
        { class: "card", "data-testid": "card" },
        h("p", { class: "meta" }, `${revealed.dataset} · ${revealed.record_id}`),
        sentenceWithAspect(revealed),
        revealPanel(revealed, myLabel, note),
      ),
    );
  }

  function renderDone(): void {
    const container = h("div", { class: "stats-slot" });
    root.replaceChildren(
      header(),
      h(
        "section",
        { class: "done", "data-testid": "done" },
        h("h2", {}, "All done"),
        h("p", {}, `You reviewed ${progress.voted} of ${progress.total} sampled records. Thank you!`),
        container,
      ),
    );
    void fetchStatsInto(container);
  }

  function statsPanel(stats: StatsResponse): HTMLElement {
    const agreement = stats.agreement;
    const agreementLine =
      agreement.rate === null
        ? "Agreement with revised labels: n/a (no votes yet)"
        : `Agreement with revised labels: ${formatPercent(agreement.rate)} ` +
          `(${agreement.matching} of ${agreement.total} votes)`;
    const annotators = Object.entries(stats.per_annotator).map(([who, count]) =>
      h("li", {}, `${who}: ${count} vote${count === 1 ? "" : "s"}`),
    );
    return h(
      "section",
      { class: "stats", "data-testid": "stats" },
      h("h2", {}, "Voting statistics"),
      h("p", { "data-testid": "stats-votes" }, `${stats.votes} votes on a sample of ${stats.sample_size} records`),
      h("p", { "data-testid": "agreement" }, agreementLine),
      annotators.length ? h("ul", { class: "annotators" }, ...annotators) : "",
      h("p", {}, `${stats.merged_records} records merged so far`),
    );
  }

  async function fetchStatsInto(container: HTMLElement): Promise<void> {
    try {
      const stats = await client.stats();
      container.replaceChildren(statsPanel(stats));
    } catch (error) {
      container.replaceChildren(h("p", { class: "error", "data-testid": "error" }, describe(error)));
    }
  }

  function renderError(error: unknown): void {
    const retry = h("button", { "data-testid": "retry", type: "button" }, "Try again");
    retry.addEventListener("click", () => void loadNext());
    root.replaceChildren(
      header(),
      h("p", { class: "error", "data-testid": "error" }, describe(error)),
      retry,
    );
  }

  function describe(error: unknown): string {
    if (error instanceof ApiError) {
      return `The service answered ${error.status}: ${error.message}`;
    }
    return error instanceof Error ? error.message : String(error);
  }

  // -- actions ----------------------------------------------------------

  async function start(name: string): Promise<void> {
    const trimmed = name.trim();
    if (!trimmed) {
      renderLogin("Please enter an annotator id.");
      return;
    }
    annotator = trimmed;
    await loadNext();
  }

  async function loadNext(): Promise<void> {
    try {
      const res = await client.next(annotator);
      progress = res.progress;
      if (res.done || res.record === null) {
        current = null;
        renderDone();
        return;
      }
      current = res.record;
      renderCard();
    } catch (error) {
      renderError(error);
    }
  }

  async function submit(label: number): Promise<void> {
    if (submitting || !current) {
      return;
    }
    submitting = true;
    for (const button of root.querySelectorAll<HTMLButtonElement>("button.vote")) {
      button.disabled = true;
    }
    try {
      const res = await client.vote(current.record_id, annotator, label);
      renderReveal(res.revealed, label);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // Someone (perhaps this annotator in another tab) already voted:
        // nothing was logged; show the stored labels and move on.
        try {
          const revealed = await client.item(current.record_id);
          renderReveal(revealed, null, "You had already voted on this sentence; nothing was recorded twice.");
        } catch (inner) {
          renderError(inner);
        }
      } else {
        renderError(error);
      }
    } finally {
      submitting = false;
    }
  }

  async function showStats(): Promise<void> {
    const back = h("button", { "data-testid": "back", type: "button" }, current ? "Back to voting" : "Refresh");
    back.addEventListener("click", () => void (current ? renderCard() : showStats()));
    const container = h("div", { class: "stats-slot" });
    root.replaceChildren(header(), container, back);
    await fetchStatsInto(container);
  }

  renderLogin();

  return {
    start,
    loadNext,
    submit,
    showStats,
    get annotator() {
      return annotator;
    },
  };
}
