/**
 * Topology view: one glyph per registered node, the manager centered
 * and member nodes on a ring around it, each glyph carrying one badge
 * per dynamic tier with its instance count and state.
 *
 * Rendering is a pure function of console state; nothing in here talks
 * to the network or mutates anything beyond the container.
 */

import { NodeView } from "./api.js";
import { clear, el, fmtAge, svgEl } from "./dom.js";
import { ConsoleState } from "./state.js";

export interface TopologyHandlers {
  selectNode(nodeId: string): void;
  retry(): void;
}

const WIDTH = 640;
const HEIGHT = 360;
const NODE_RADIUS = 46;

export function renderTopology(
  container: HTMLElement,
  state: ConsoleState,
  handlers: TopologyHandlers,
): void {
  clear(container);
  container.append(header(state));

  if (!state.connected) {
    container.append(banner(state, handlers));
  }
  const snapshot = state.snapshot;
  if (snapshot === null) {
    if (state.connected) {
      container.append(el("p", { class: "empty-state" }, "Waiting for the first poll."));
    }
    return;
  }
  if (snapshot.nodes.length === 0) {
    container.append(
      el("p", { class: "empty-state", "data-empty": "true" }, "No nodes registered yet."),
    );
    return;
  }
  container.append(graph(snapshot.nodes, state.selectedNode, handlers));
}

function header(state: ConsoleState): HTMLElement {
  const age =
    state.snapshot === null
      ? "no data yet"
      : `updated ${fmtAge(Date.now() - state.snapshot.takenAt)}`;
  const title = el("h2", {}, "Topology");
  const meta = el("span", { class: "snapshot-age", "data-age": "true" }, age);
  if (state.readOnly) {
    meta.append(" · ");
    meta.append(el("span", { class: "read-only-flag" }, "read-only"));
  }
  return el("div", { class: "section-header" }, title, meta);
}

function banner(state: ConsoleState, handlers: TopologyHandlers): HTMLElement {
  const retry = el(
    "button",
    { class: "retry", onclick: () => handlers.retry() },
    "Retry now",
  );
  const wait = `retrying every ${(state.pollDelayMs / 1000).toFixed(0)}s`;
  return el(
    "div",
    { class: "banner banner-error", "data-banner": "connection" },
    el("span", {}, `Connection to the manager lost; ${wait}. `),
    retry,
  );
}

function graph(
  nodes: NodeView[],
  selected: string | null,
  handlers: TopologyHandlers,
): SVGSVGElement {
  const svg = svgEl("svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    class: "topology-graph",
    role: "list",
  });
  const placed = layout(nodes);
  const center = placed.find((p) => p.node.gmt) ?? placed[0];

  // Spokes first so they draw under the glyphs.
  for (const spot of placed) {
    if (spot === center) continue;
    svg.append(
      svgEl("line", {
        x1: String(center.x),
        y1: String(center.y),
        x2: String(spot.x),
        y2: String(spot.y),
        class: "spoke",
      }),
    );
  }
  for (const spot of placed) {
    svg.append(glyph(spot, spot.node.node_id === selected, handlers));
  }
  return svg;
}

interface Placed {
  node: NodeView;
  x: number;
  y: number;
}

/** Manager at the center, member nodes evenly spaced on a ring. */
function layout(nodes: NodeView[]): Placed[] {
  const cx = WIDTH / 2;
  const cy = HEIGHT / 2;
  const ring = nodes.filter((node) => !node.gmt);
  const radius = Math.min(cx, cy) - NODE_RADIUS - 12;
  let index = 0;
  return nodes.map((node) => {
    if (node.gmt) {
      return { node, x: cx, y: cy };
    }
    const angle = (2 * Math.PI * index++) / Math.max(ring.length, 1) - Math.PI / 2;
    return {
      node,
      x: cx + radius * Math.cos(angle),
      y: cy + radius * Math.sin(angle),
    };
  });
}

function glyph(
  spot: Placed,
  selected: boolean,
  handlers: TopologyHandlers,
): SVGGElement {
  const { node, x, y } = spot;
  const group = svgEl("g", {
    class: selected ? "node-glyph selected" : "node-glyph",
    "data-node-id": node.node_id,
    role: "listitem",
    transform: `translate(${x} ${y})`,
  });
  group.addEventListener("click", () => handlers.selectNode(node.node_id));
  group.append(
    svgEl("circle", {
      r: String(NODE_RADIUS),
      class: node.gmt ? "node-circle gmt" : "node-circle",
    }),
  );
  group.append(
    svgEl("text", { class: "node-label", y: "-10", "text-anchor": "middle" },
      node.node_id),
  );
  if (node.gmt) {
    group.append(
      svgEl("text", { class: "node-role", y: "4", "text-anchor": "middle" }, "GMT"),
    );
  }
  node.tiers.forEach((tier, i) => {
    const offset = (i - (node.tiers.length - 1) / 2) * 30;
    const badge = svgEl("g", {
      class: `tier-badge tier-${tier.state}`,
      "data-tier": tier.identity,
      "data-count": String(tier.count),
      transform: `translate(${offset} 22)`,
    });
    badge.append(svgEl("rect", { x: "-14", y: "-9", width: "28", height: "18", rx: "4" }));
    // Middle letter tells the dynamic tiers apart: DST/DGT/DWT.
    badge.append(
      svgEl("text", { "text-anchor": "middle", y: "4" },
        `${tier.identity[1]}${tier.count}`),
    );
    badge.append(svgEl("title", {}, `${tier.identity}: ${tier.count} (${tier.state})`));
    group.append(badge);
  });
  return group;
}
