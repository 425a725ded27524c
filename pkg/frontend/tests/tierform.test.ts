/** Tier allocation form: what the operator can select and submit. */

// @vitest-environment jsdom

import { beforeEach, describe, expect, it } from "vitest";

import { TierSchema } from "../src/api.js";
import { ConsoleState, Snapshot, initialState } from "../src/state.js";
import { renderTierControls, TierHandlers } from "../src/tiers.js";
import { addableTiers } from "../src/validate.js";
import { defaultSchemas, threeNodes } from "./helpers.js";

function stateWithNodes(overrides: Partial<ConsoleState> = {}): ConsoleState {
  const snapshot: Snapshot = {
    nodes: threeNodes(),
    stats: null,
    demands: null,
    jobs: [],
    jobDetail: null,
    takenAt: Date.now(),
  };
  return { ...initialState(1000), snapshot, connected: true, ...overrides };
}

interface Recorded {
  adds: Array<[string, string]>;
  removes: Array<[string, string]>;
  settle: () => void;
}

function recordingHandlers(): TierHandlers & Recorded {
  const adds: Array<[string, string]> = [];
  const removes: Array<[string, string]> = [];
  let release: () => void = () => {};
  const gate = new Promise<void>((resolve) => {
    release = resolve;
  });
  return {
    adds,
    removes,
    settle: () => release(),
    addTier: (nodeId, identity) => {
      adds.push([nodeId, identity]);
      return gate;
    },
    removeTier: (nodeId, identity) => {
      removes.push([nodeId, identity]);
      return gate;
    },
  };
}

function options(container: HTMLElement): string[] {
  const select = container.querySelector('select[data-field="identity"]');
  return [...(select?.querySelectorAll("option") ?? [])].map((o) => o.value);
}

describe("tier controls", () => {
  let container: HTMLElement;

  beforeEach(() => {
    container = document.createElement("div");
    document.body.replaceChildren(container);
  });

  it("offers only the dynamic tiers", () => {
    const offered = addableTiers(Object.values(defaultSchemas()));
    renderTierControls(container, stateWithNodes(), offered, recordingHandlers());
    expect(options(container).sort()).toEqual(["DGT", "DST", "DWT"]);
  });

  it("keeps GMT out even when a hostile schema marks it addable", () => {
    const schemas: TierSchema[] = Object.values(defaultSchemas()).map((schema) =>
      schema.tier === "GMT" ? { ...schema, addable: true } : schema,
    );
    renderTierControls(
      container,
      stateWithNodes(),
      addableTiers(schemas),
      recordingHandlers(),
    );
    expect(options(container)).not.toContain("GMT");
  });

  it("issues exactly one add for a double click", () => {
    const handlers = recordingHandlers();
    renderTierControls(container, stateWithNodes(), ["DST", "DGT", "DWT"], handlers);

    const add = container.querySelector('[data-action="add"]') as HTMLButtonElement;
    add.click();
    add.click();
    expect(handlers.adds).toHaveLength(1);
    expect(handlers.removes).toHaveLength(0);
    handlers.settle();
  });

  it("re-arms the buttons once the mutation settles", async () => {
    const handlers = recordingHandlers();
    renderTierControls(container, stateWithNodes(), ["DST", "DGT", "DWT"], handlers);

    const add = container.querySelector('[data-action="add"]') as HTMLButtonElement;
    const remove = container.querySelector(
      '[data-action="remove"]',
    ) as HTMLButtonElement;
    add.click();
    expect(add.disabled).toBe(true);
    expect(remove.disabled).toBe(true);
    handlers.settle();
    await Promise.resolve();
    await Promise.resolve();
    expect(add.disabled).toBe(false);
    expect(remove.disabled).toBe(false);
  });

  it("sends the selected node and identity", () => {
    const handlers = recordingHandlers();
    renderTierControls(container, stateWithNodes(), ["DST", "DGT", "DWT"], handlers);

    const nodeSelect = container.querySelector(
      'select[data-field="node"]',
    ) as HTMLSelectElement;
    const identitySelect = container.querySelector(
      'select[data-field="identity"]',
    ) as HTMLSelectElement;
    nodeSelect.value = "crunch";
    identitySelect.value = "DWT";
    (container.querySelector('[data-action="remove"]') as HTMLButtonElement).click();
    expect(handlers.removes).toEqual([["crunch", "DWT"]]);
    handlers.settle();
  });

  it("disables both buttons in read-only mode and sends nothing", () => {
    const handlers = recordingHandlers();
    renderTierControls(
      container,
      stateWithNodes({ readOnly: true }),
      ["DST", "DGT", "DWT"],
      handlers,
    );

    const add = container.querySelector('[data-action="add"]') as HTMLButtonElement;
    expect(add.disabled).toBe(true);
    add.click();
    expect(handlers.adds).toHaveLength(0);
  });

  it("surfaces validation trouble in the form's error slot", () => {
    const handlers = recordingHandlers();
    // Empty offer list: no identity can be chosen.
    renderTierControls(container, stateWithNodes(), [], handlers);

    (container.querySelector('[data-action="add"]') as HTMLButtonElement).click();
    const slot = container.querySelector('[data-error-for="tier-form"]');
    expect(slot?.textContent).not.toBe("");
    expect(handlers.adds).toHaveLength(0);
  });
});
