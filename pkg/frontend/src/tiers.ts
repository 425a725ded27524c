/**
 * Tier allocation controls: add or remove one tier instance on a
 * registered node.
 *
 * The identity selector is driven by the server's /v1/schema answers
 * intersected with the static allow-list, so GMT is never offered. The
 * submit buttons disarm synchronously on click and stay disarmed until
 * the mutation settles; a double click can never issue two requests.
 */

import { clear, el } from "./dom.js";
import { ConsoleState } from "./state.js";
import { validateTierForm } from "./validate.js";

export interface TierHandlers {
  /** Resolves when the mutation settled (confirmed or rejected). */
  addTier(nodeId: string, identity: string): Promise<void>;
  removeTier(nodeId: string, identity: string): Promise<void>;
}

export function renderTierControls(
  container: HTMLElement,
  state: ConsoleState,
  offeredTiers: string[],
  handlers: TierHandlers,
): void {
  clear(container);
  container.append(el("h2", {}, "Tier allocation"));

  const nodes = state.snapshot?.nodes ?? [];
  if (nodes.length === 0) {
    container.append(el("p", { class: "empty-state" }, "No nodes to steer yet."));
    return;
  }

  const nodeSelect = el("select", { "data-field": "node" });
  for (const node of nodes) {
    const option = el("option", { value: node.node_id }, node.node_id);
    if (state.selectedNode === node.node_id) option.selected = true;
    nodeSelect.append(option);
  }

  const identitySelect = el("select", { "data-field": "identity" });
  for (const identity of offeredTiers) {
    identitySelect.append(el("option", { value: identity }, identity));
  }

  const errorSlot = el("span", { class: "field-error", "data-error-for": "tier-form" });

  const addButton = el("button", { "data-action": "add" }, "Add tier");
  const removeButton = el("button", { "data-action": "remove" }, "Remove tier");
  if (state.readOnly) {
    addButton.disabled = true;
    removeButton.disabled = true;
  }

  const submit = (action: "add" | "remove") => {
    // Synchronous disarm: the second click of a double-click sees the
    // buttons already disabled.
    if (addButton.disabled || removeButton.disabled) return;
    const checked = validateTierForm(
      nodeSelect.value || null,
      identitySelect.value || null,
      offeredTiers,
    );
    if (!checked.ok) {
      errorSlot.textContent = Object.values(checked.errors).join("; ");
      return;
    }
    errorSlot.textContent = "";
    addButton.disabled = true;
    removeButton.disabled = true;
    const { nodeId, identity } = checked.value;
    const run =
      action === "add"
        ? handlers.addTier(nodeId, identity)
        : handlers.removeTier(nodeId, identity);
    void run.finally(() => {
      addButton.disabled = state.readOnly;
      removeButton.disabled = state.readOnly;
    });
  };
  addButton.addEventListener("click", () => submit("add"));
  removeButton.addEventListener("click", () => submit("remove"));

  container.append(
    el(
      "div",
      { class: "tier-form" },
      el("label", {}, "node ", nodeSelect),
      el("label", {}, "tier ", identitySelect),
      addButton,
      removeButton,
      errorSlot,
    ),
  );
}
