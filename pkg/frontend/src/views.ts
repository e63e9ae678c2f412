// DOM construction for every screen. Renderers read only the whitelisted
// blinded fields off the payloads (never spreading unknown keys into the
// DOM), which is what the blinding audit tests lock down.

import { criteriaFor } from "./criteria.js";
import type { Candidate, Progress, QueueEntry, SurveyItem, TallyResponse } from "./types.js";
import { NONE_CANDIDATE_ID } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderProgress(progress: Progress): HTMLElement {
  return el("div", "progress", `${progress.answered} / ${progress.total} answered`);
}

function candidateCard(
  candidate: Candidate,
  index: number,
  mode: "single" | "multi",
): HTMLElement {
  const card = el("label", "candidate-card");
  card.dataset.candidateId = candidate.candidate_id;
  const input = el("input") as HTMLInputElement;
  input.type = mode === "single" ? "radio" : "checkbox";
  input.name = "candidate";
  input.value = candidate.candidate_id;
  card.append(
    input,
    el("span", "candidate-key", `${index + 1}`),
    el("span", "candidate-text", candidate.text),
  );
  return card;
}

export interface ItemViewHandle {
  root: HTMLElement;
  selections(): string[];
  toggleByNumber(key: number): void;
  submitButton: HTMLButtonElement;
  errorBox: HTMLElement;
}

export function renderItem(
  item: SurveyItem,
  progress: Progress,
  mediaUrl: (memeId: string) => string,
): ItemViewHandle {
  const root = el("section", "item-view");
  root.dataset.itemId = item.item_id;

  const image = el("img", "meme-image") as HTMLImageElement;
  image.src = mediaUrl(item.meme_id);
  image.alt = "meme under review";
  root.append(image);

  const info = criteriaFor(item.subtask);
  const header = el("header", "subtask-header");
  header.append(el("h2", "subtask-label", info.label));
  if (info.explanation) header.append(el("p", "subtask-explanation", info.explanation));
  const criteriaList = el("ul", "criteria");
  for (const line of info.criteria) criteriaList.append(el("li", undefined, line));
  header.append(criteriaList);
  root.append(header, renderProgress(progress));

  const cards = el("div", "candidates");
  const mode = item.selection_mode;
  item.candidates.forEach((candidate, index) => {
    cards.append(candidateCard(candidate, index, mode));
  });
  if (item.allow_none) {
    cards.append(
      candidateCard({ candidate_id: NONE_CANDIDATE_ID, text: "None of these" },
        item.candidates.length, mode),
    );
  }
  root.append(cards);

  const errorBox = el("div", "error-box");
  errorBox.hidden = true;
  const submitButton = el("button", "submit", "Submit") as HTMLButtonElement;
  submitButton.type = "button";
  submitButton.disabled = true; // until something is selected
  root.append(errorBox, submitButton);

  const inputs = (): HTMLInputElement[] =>
    Array.from(cards.querySelectorAll("input"));
  const selections = (): string[] =>
    inputs()
      .filter((input) => input.checked)
      .map((input) => input.value);
  const syncSubmit = (): void => {
    submitButton.disabled = selections().length === 0;
  };
  cards.addEventListener("change", syncSubmit);

  return {
    root,
    submitButton,
    errorBox,
    selections,
    toggleByNumber: (key: number) => {
      const input = inputs()[key - 1];
      if (!input) return;
      if (mode === "single") {
        inputs().forEach((other) => (other.checked = other === input));
      } else {
        input.checked = !input.checked;
      }
      syncSubmit();
    },
  };
}

export function renderCompletion(progress: Progress, tallyHref: string): HTMLElement {
  const root = el("section", "completion-view");
  root.append(el("h2", undefined, "All done"));
  root.append(el("p", undefined,
    `You answered ${progress.answered} of ${progress.total} items. Thank you!`));
  const link = el("a", "tally-link", "View the running tally") as HTMLAnchorElement;
  link.href = tallyHref;
  root.append(link);
  return root;
}

export function renderTokenPrompt(): { root: HTMLElement; input: HTMLInputElement; button: HTMLButtonElement } {
  const root = el("section", "token-view");
  root.append(el("h2", undefined, "Evaluator token"));
  root.append(el("p", undefined, "Paste the token you were given to start reviewing."));
  const input = el("input", "token-input") as HTMLInputElement;
  input.type = "text";
  const button = el("button", "token-go", "Start") as HTMLButtonElement;
  button.type = "button";
  root.append(input, button);
  return { root, input, button };
}

export function renderErrorBanner(message: string): { root: HTMLElement; retry: HTMLButtonElement } {
  const root = el("section", "error-banner");
  root.append(el("p", undefined, message));
  const retry = el("button", "retry", "Retry") as HTMLButtonElement;
  retry.type = "button";
  root.append(retry);
  return { root, retry };
}

export function renderTally(tally: TallyResponse): HTMLElement {
  const root = el("section", "tally-view");
  root.append(el("h2", undefined, "Preference tally"));
  const table = el("table", "tally-grid");
  const head = el("tr");
  head.append(el("th", undefined, "candidate group"));
  for (const subtask of tally.subtasks) {
    head.append(el("th", undefined, criteriaFor(subtask).label));
  }
  head.append(el("th", undefined, "total"));
  table.append(head);
  // group keys are anonymized before they reach the client renderer
  const keys = Object.keys(tally.cells).sort();
  keys.forEach((key, index) => {
    const row = el("tr");
    row.append(el("td", undefined, `group ${index + 1}`));
    let total = 0;
    for (const subtask of tally.subtasks) {
      const count = tally.cells[key][subtask] ?? 0;
      total += count;
      row.append(el("td", undefined, String(count)));
    }
    row.append(el("td", undefined, String(tally.cells[key]["total"] ?? total)));
    table.append(row);
  });
  root.append(table);
  root.append(el("p", "abstentions", `abstentions: ${tally.abstentions}`));
  return root;
}

export interface QueueViewHandle {
  root: HTMLElement;
  acceptButton: HTMLButtonElement;
  rejectButton: HTMLButtonElement;
  disableVerdicts(): void;
  historyStrip: HTMLElement;
}

export function renderVerification(
  pair: QueueEntry,
  mediaUrl: (id: string) => string,
  historyStrip: HTMLElement,
): QueueViewHandle {
  const root = el("section", "queue-view");
  root.dataset.pairKey = pair.key;

  const images = el("div", "pair-images");
  const instance = el("img", "instance-image") as HTMLImageElement;
  instance.src = mediaUrl(pair.instance_id);
  instance.alt = "meme instance";
  const template = el("img", "template-image") as HTMLImageElement;
  template.src = mediaUrl(pair.template_id);
  template.alt = "candidate template";
  images.append(instance, template);
  root.append(images);

  const scores = el("p", "pair-scores",
    `match distance ${pair.stage1_score.toFixed(3)}` +
    (pair.stage2_score !== null ? `, perceptual ${pair.stage2_score.toFixed(3)}` : ""));
  root.append(scores);

  const acceptButton = el("button", "accept", "Accept (A)") as HTMLButtonElement;
  const rejectButton = el("button", "reject", "Reject (R)") as HTMLButtonElement;
  acceptButton.type = "button";
  rejectButton.type = "button";
  root.append(acceptButton, rejectButton, historyStrip);

  return {
    root,
    acceptButton,
    rejectButton,
    historyStrip,
    disableVerdicts: () => {
      acceptButton.disabled = true;
      rejectButton.disabled = true;
    },
  };
}

export function renderIdleQueue(): HTMLElement {
  const root = el("section", "idle-view");
  root.append(el("h2", undefined, "Queue empty"));
  root.append(el("p", undefined, "No pairs are waiting for verification."));
  return root;
}

export function historyChip(key: string, status: string): HTMLElement {
  const chip = el("span", `chip chip-${status}`, `${key}: ${status}`);
  return chip;
}
