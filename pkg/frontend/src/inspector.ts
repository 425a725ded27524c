/**
 * Demand-store inspector: the counter grid from /v1/store/stats and a
 * filterable, cursor-paged table of demands with one state chip per
 * row. Shows demand metadata only, never payload bytes.
 */

import { DemandView } from "./api.js";
import { clear, el, fmtBytes } from "./dom.js";
import { ConsoleState } from "./state.js";

export interface InspectorHandlers {
  setStateFilter(state: string | null): void;
  setStageFilter(stage: string | null): void;
  firstPage(): void;
  nextPage(cursor: number): void;
}

export const DEMAND_STATES = ["PENDING", "INPROCESS", "COMPLETED", "FAILED"] as const;

const COUNTERS: ReadonlyArray<readonly [string, string]> = [
  ["deposits", "deposits"],
  ["withdrawals", "withdrawals"],
  ["completed", "completed"],
  ["cache_hits", "cache hits"],
  ["coalesced", "coalesced"],
  ["requeues", "requeues"],
  ["failures", "failures"],
  ["in_process", "in process"],
  ["warehouse_size", "warehouse"],
];

export function renderInspector(
  container: HTMLElement,
  state: ConsoleState,
  handlers: InspectorHandlers,
): void {
  clear(container);
  container.append(el("h2", {}, "Demand store"));

  const stats = state.snapshot?.stats ?? null;
  if (stats !== null) {
    const grid = el("dl", { class: "stats-grid" });
    for (const [key, label] of COUNTERS) {
      const raw = (stats as unknown as Record<string, unknown>)[key];
      grid.append(el("dt", {}, label));
      grid.append(
        el("dd", { "data-stat": key }, String(typeof raw === "number" ? raw : 0)),
      );
    }
    container.append(grid);
  }

  container.append(filters(state, handlers));

  const page = state.snapshot?.demands ?? null;
  if (page === null) {
    container.append(el("p", { class: "empty-state" }, "No demand data yet."));
    return;
  }
  if (page.demands.length === 0) {
    container.append(
      el("p", { class: "empty-state" }, "No demands match the current filter."),
    );
  } else {
    container.append(demandTable(page.demands));
  }
  container.append(pager(state, page.next_cursor, handlers));
}

function filters(state: ConsoleState, handlers: InspectorHandlers): HTMLElement {
  const stateSelect = el("select", { "data-filter": "state" });
  stateSelect.append(el("option", { value: "" }, "all states"));
  for (const name of DEMAND_STATES) {
    const option = el("option", { value: name }, name);
    if (state.demandFilters.state === name) option.selected = true;
    stateSelect.append(option);
  }
  stateSelect.addEventListener("change", () =>
    handlers.setStateFilter(stateSelect.value === "" ? null : stateSelect.value),
  );

  const stageInput = el("input", {
    type: "text",
    placeholder: "stage filter",
    "data-filter": "stage",
  });
  stageInput.value = state.demandFilters.stage ?? "";
  stageInput.addEventListener("change", () =>
    handlers.setStageFilter(stageInput.value.trim() === "" ? null : stageInput.value.trim()),
  );

  return el("div", { class: "filter-row" }, stateSelect, stageInput);
}

function demandTable(demands: DemandView[]): HTMLElement {
  const head = el(
    "tr",
    {},
    el("th", {}, "state"),
    el("th", {}, "workload"),
    el("th", {}, "stage"),
    el("th", {}, "attempts"),
    el("th", {}, "payload"),
    el("th", {}, "signature"),
  );
  const table = el("table", { class: "demand-table" }, el("thead", {}, head));
  const body = el("tbody");
  for (const demand of demands) {
    body.append(
      el(
        "tr",
        { "data-demand-id": demand.id },
        el("td", {},
          el("span", {
            class: `chip chip-${demand.state.toLowerCase()}`,
            "data-state": demand.state,
          }, demand.state)),
        el("td", {}, demand.workload),
        el("td", {}, demand.stage),
        el("td", { "data-attempts": String(demand.attempts) }, String(demand.attempts)),
        el("td", {}, fmtBytes(demand.payload_size)),
        el("td", { class: "signature" }, demand.signature.slice(0, 12)),
      ),
    );
  }
  table.append(body);
  return table;
}

function pager(
  state: ConsoleState,
  nextCursor: number | null,
  handlers: InspectorHandlers,
): HTMLElement {
  const first = el(
    "button",
    { onclick: () => handlers.firstPage() },
    "First page",
  );
  if (state.demandFilters.cursor === 0) first.disabled = true;
  const next = el(
    "button",
    {
      onclick: () => {
        if (nextCursor !== null) handlers.nextPage(nextCursor);
      },
    },
    "Next page",
  );
  if (nextCursor === null) next.disabled = true;
  return el("div", { class: "pager" }, first, next);
}
