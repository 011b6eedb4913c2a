// DOM rendering. The transcript is re-rendered from state on every change;
// no incremental patching needed at this scale.

import type { Decision } from "./api";
import type { SessionState, TranscriptEntry } from "./state";

export interface RenderCallbacks {
  onToggle: (index: number, keep: boolean) => void;
}

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

export function renderChip(
  decision: Decision,
  index: number,
  interactive: boolean,
  callbacks: RenderCallbacks,
): HTMLElement {
  const chip = el("button", `chip ${decision.keep ? "keep" : "drop"}`);
  chip.dataset.index = String(index);
  chip.dataset.word = decision.word;
  chip.dataset.keep = String(decision.keep);
  chip.append(el("span", "chip-word", decision.word));
  chip.append(el("span", "chip-prob", decision.prob.toFixed(2)));
  chip.title =
    `${decision.word}: ${decision.keep ? "keep" : "drop"} ` +
    `(p=${decision.prob.toFixed(2)}, source=${decision.source})`;
  if (decision.source === "override") chip.classList.add("overridden");
  chip.disabled = !interactive;
  if (interactive) {
    chip.addEventListener("click", () =>
      callbacks.onToggle(index, !decision.keep),
    );
  }
  return chip;
}

function renderEntry(
  entry: TranscriptEntry,
  interactive: boolean,
  callbacks: RenderCallbacks,
): HTMLElement {
  const item = el("li", `entry ${entry.kind}`);
  if (entry.kind === "turn") {
    const header = entry.result.noop
      ? `turn ${entry.result.turn} (no change)`
      : `turn ${entry.result.turn}`;
    item.append(el("div", "entry-label", header));
    item.append(el("div", "user-input", entry.result.input ?? ""));
  } else {
    item.append(el("div", "entry-label", "manual correction"));
  }
  const internal = el("div", "internal-query");
  internal.textContent = entry.result.internal_query.join(" ");
  item.append(internal);
  const chips = el("div", "chips");
  entry.result.decisions.forEach((d, i) =>
    chips.append(renderChip(d, i, interactive, callbacks)),
  );
  item.append(chips);
  return item;
}

export function renderApp(
  root: HTMLElement,
  state: SessionState,
  callbacks: RenderCallbacks,
): void {
  root.textContent = "";
  const list = el("ul", "transcript");
  list.id = "transcript";
  state.transcript.forEach((entry, i) => {
    // Only the newest decision set may be corrected.
    const interactive = i === state.transcript.length - 1 && !state.busy;
    list.append(renderEntry(entry, interactive, callbacks));
  });
  root.append(list);
  if (state.error) {
    root.append(el("div", "error", state.error));
  }
}
