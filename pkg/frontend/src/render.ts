import type { GroupRow, ScenarioAnswer, SketchMeta } from "./api.js";
import type { HistoryEntry, SessionState } from "./state.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** A single scalar for history deltas; null for non-scalar answers. */
export function scalarOf(answer: ScenarioAnswer): number | null {
  const value = answer.value;
  if (typeof value === "number") return value;
  if (value && typeof value === "object" && "weight" in value) return (value as { weight: number }).weight;
  if (value && typeof value === "object" && "rank" in value) return (value as { rank: number }).rank;
  return null;
}

export function renderSketchList(
  container: HTMLElement,
  sketches: SketchMeta[],
  onSelect: (sketchId: string) => void,
): void {
  container.replaceChildren();
  if (sketches.length === 0) {
    container.append(el("p", "placeholder", "No sketches loaded on the service."));
    return;
  }
  for (const meta of sketches) {
    const button = el("button", "sketch-entry") as HTMLButtonElement;
    button.dataset.sketchId = meta.sketchId;
    button.textContent = `${meta.sketchId} · ${meta.kind} · k=${meta.k}`;
    button.addEventListener("click", () => onSelect(meta.sketchId));
    container.append(button);
  }
}

export function renderScenarioPanel(
  container: HTMLElement,
  state: SessionState,
  handlers: { onToggle: (index: number) => void; onPhi: (phi: number) => void },
): void {
  container.replaceChildren();
  const meta = state.meta;
  if (!meta) {
    container.append(el("p", "placeholder", "Select a sketch to explore scenarios."));
    return;
  }
  const header = el("div", "panel-header",
    `${meta.kind} sketch, ε=${meta.epsilon ?? "?"}, δ=${meta.delta ?? "?"}`);
  container.append(header);

  const list = el("div", "toggle-list");
  state.toggles.forEach((isOn, i) => {
    const row = el("label", "toggle-row");
    const box = el("input") as HTMLInputElement;
    box.type = "checkbox";
    box.checked = isOn;
    box.dataset.index = String(i);
    box.addEventListener("change", () => handlers.onToggle(i));
    row.append(box, el("span", "toggle-label", state.label(i)));
    list.append(row);
  });
  container.append(list);

  if (meta.kind === "quantile") {
    const row = el("div", "phi-row");
    const slider = el("input", "phi-slider") as HTMLInputElement;
    slider.type = "range";
    slider.id = "phi-slider";
    slider.min = "0.01";
    slider.max = "1";
    slider.step = "0.01";
    slider.value = String(state.phi);
    slider.addEventListener("change", () => handlers.onPhi(Number(slider.value)));
    row.append(el("span", "phi-label", `φ = ${state.phi.toFixed(2)}`), slider);
    container.append(row);
  }

  const status = el("p", "dispatch-status");
  status.id = "dispatch-status";
  status.textContent = state.canDispatch
    ? `scenario {${state.scenario().join(",")}}`
    : "turn on at least one hypothetical";
  container.append(status);
}

function answerBody(answer: ScenarioAnswer): HTMLElement {
  const value = answer.value;
  if (typeof value === "number") {
    return el("p", "answer-value", String(value));
  }
  if (Array.isArray(value) && value.every((v) => typeof v === "number")) {
    const table = el("table", "coefficient-table");
    (value as number[]).forEach((coefficient, i) => {
      const row = el("tr");
      row.append(el("td", "", `x${i + 1}`), el("td", "answer-value", String(coefficient)));
      table.append(row);
    });
    return table;
  }
  if (Array.isArray(value)) {
    const table = el("table", "group-table");
    for (const row of value as GroupRow[]) {
      const tr = el("tr", row.error ? "group-error" : "group-row");
      tr.append(el("td", "", row.group.join(", ")));
      tr.append(el("td", "answer-value", row.error ?? JSON.stringify(row.value)));
      table.append(tr);
    }
    return table;
  }
  if (value && typeof value === "object" && "rank" in value) {
    return el("p", "answer-value", String((value as { rank: number }).rank));
  }
  const tuple = value as { id: number; weight: number };
  const node = el("p", "answer-value", String(tuple.weight));
  node.dataset.tupleId = String(tuple.id);
  return node;
}

export function renderAnswerCard(container: HTMLElement, answer: ScenarioAnswer | null): void {
  container.replaceChildren();
  if (!answer) {
    container.append(el("p", "placeholder", "No answer yet."));
    return;
  }
  const card = el("div", "answer-card");
  card.append(el("div", "answer-kind", `${answer.kind} on {${answer.scenario.join(",")}}`));
  card.append(answerBody(answer));
  if (answer.degraded) {
    card.append(el("span", "degraded-badge", "degraded"));
  }
  container.append(card);
}

type SortKey = "timestamp" | "scenario" | "value";

export class HistoryView {
  private sortKey: SortKey = "timestamp";
  private ascending = true;
  private selected: number[] = [];  // history indices, at most two

  constructor(private readonly container: HTMLElement) {}

  sortBy(key: SortKey): void {
    if (this.sortKey === key) {
      this.ascending = !this.ascending;
    } else {
      this.sortKey = key;
      this.ascending = true;
    }
  }

  toggleSelect(index: number): void {
    if (this.selected.includes(index)) {
      this.selected = this.selected.filter((i) => i !== index);
    } else {
      this.selected = [...this.selected.slice(-1), index];
    }
  }

  render(history: HistoryEntry[]): void {
    this.container.replaceChildren();
    if (history.length === 0) {
      this.container.append(el("p", "placeholder", "No scenarios answered yet."));
      return;
    }
    const order = history.map((_, i) => i);
    const key = (i: number): number | string => {
      const entry = history[i];
      if (this.sortKey === "timestamp") return entry.timestamp;
      if (this.sortKey === "scenario") return entry.scenario.join(",");
      return scalarOf(entry.answer) ?? Number.NaN;
    };
    order.sort((a, b) => {
      const ka = key(a);
      const kb = key(b);
      const cmp = ka < kb ? -1 : ka > kb ? 1 : 0;
      return this.ascending ? cmp : -cmp;
    });

    const table = el("table", "history-table");
    const head = el("tr");
    for (const column of ["scenario", "value", "timestamp"] as const) {
      const th = el("th", "", column);
      th.addEventListener("click", () => {
        this.sortBy(column === "value" ? "value" : column);
        this.render(history);
      });
      head.append(th);
    }
    table.append(head);
    for (const i of order) {
      const entry = history[i];
      const tr = el("tr", this.selected.includes(i) ? "history-row selected" : "history-row");
      tr.dataset.index = String(i);
      tr.addEventListener("click", () => {
        this.toggleSelect(i);
        this.render(history);
      });
      const scalar = scalarOf(entry.answer);
      tr.append(
        el("td", "", `{${entry.scenario.join(",")}}`),
        el("td", "", scalar === null ? "·" : String(scalar)),
        el("td", "", new Date(entry.timestamp).toISOString()),
      );
      if (entry.degraded) tr.append(el("td", "degraded-badge", "degraded"));
      table.append(tr);
    }
    this.container.append(table);

    if (this.selected.length === 2) {
      const [a, b] = this.selected.map((i) => history[i]);
      const left = scalarOf(a.answer);
      const right = scalarOf(b.answer);
      const delta = left !== null && right !== null ? String(right - left) : "not comparable";
      const note = el("p", "delta-note", `Δ {${a.scenario.join(",")}} → {${b.scenario.join(",")}}: ${delta}`);
      note.id = "history-delta";
      this.container.append(note);
    }
  }
}
