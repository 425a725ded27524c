/**
 * Console assembly: builds the section layout, wires handlers, starts
 * the poll loop, and re-renders on every state change.
 *
 * The page boots itself only when the #edurt-console mount point
 * exists; tests assemble consoles explicitly through createConsole with
 * their own root element and mocked fetch.
 */

import { JobRequest, ManagementApi } from "./api.js";
import { clear, el } from "./dom.js";
import { renderInspector } from "./inspector.js";
import { renderJobs } from "./jobs.js";
import { MutationQueue, Poller, Snapshot, StateStore } from "./state.js";
import { renderTierControls } from "./tiers.js";
import { renderTopology } from "./topology.js";
import { PreparedJob, addableTiers, buildJobRequest } from "./validate.js";

export const DEFAULT_GMT = "http://127.0.0.1:7780";
const SCHEMA_TIERS = ["DST", "DGT", "DWT", "GMT"];

export interface ConsoleOptions {
  pollBaseMs?: number;
  pollCapMs?: number;
}

export interface ConsoleInstance {
  api: ManagementApi;
  store: StateStore;
  poller: Poller;
  queue: MutationQueue;
  stop(): void;
}

/** GMT base address: ?gmt= query parameter, then the EDURT_GMT global
 * a hosting page may set, then the local default. */
export function baseUrlFromEnvironment(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("gmt");
  if (fromQuery !== null && fromQuery.trim() !== "") return fromQuery;
  const fromGlobal = (globalThis as { EDURT_GMT?: unknown }).EDURT_GMT;
  if (typeof fromGlobal === "string" && fromGlobal.trim() !== "") return fromGlobal;
  return DEFAULT_GMT;
}

export function createConsole(
  root: HTMLElement,
  api: ManagementApi,
  options: ConsoleOptions = {},
): ConsoleInstance {
  const store = new StateStore(options.pollBaseMs ?? 1000);
  const queue = new MutationQueue();

  clear(root);
  const status = el("div", { class: "status-bar", "data-section": "status" });
  const topology = el("section", { "data-section": "topology" });
  const tiers = el("section", { "data-section": "tiers" });
  const inspector = el("section", { "data-section": "inspector" });
  const jobs = el("section", { "data-section": "jobs" });
  const logPane = el("section", { class: "log-pane", "data-section": "log" });
  root.append(status, topology, tiers, inspector, jobs, logPane);

  // Identities the tier form may offer; filled from /v1/schema on the
  // first successful poll and kept for the session.
  let offered: string[] | null = null;

  const poll = async (): Promise<void> => {
    if (offered === null) {
      const schemas = await Promise.all(
        SCHEMA_TIERS.map((tier) => api.getSchema(tier)),
      );
      offered = addableTiers(schemas);
    }
    const state = store.current();
    const filters = state.demandFilters;
    const nodes = await api.getNodes();
    const stats = await api.getStats();
    const demands = await api.getDemands({
      ...(filters.state === null ? {} : { state: filters.state }),
      ...(filters.stage === null ? {} : { stage: filters.stage }),
      cursor: filters.cursor,
    });
    const jobList = await api.getJobs();
    const selectedJob = store.current().selectedJob;
    const jobDetail =
      selectedJob === null ? null : await api.getJob(selectedJob);
    const snapshot: Snapshot = {
      nodes: nodes.nodes,
      stats,
      demands,
      jobs: jobList.jobs,
      jobDetail,
      takenAt: Date.now(),
    };
    store.acceptSnapshot(snapshot);
  };

  const poller = new Poller(
    poll,
    store,
    options.pollBaseMs ?? 1000,
    options.pollCapMs ?? 30000,
  );

  const runMutation = (
    attempt: string,
    call: () => Promise<string>,
  ): Promise<void> =>
    queue.enqueue(async () => {
      if (store.current().readOnly) {
        store.log("error", `read-only: ${attempt} not sent`);
        return;
      }
      try {
        const confirmation = await call();
        store.log("info", confirmation);
      } catch (exc) {
        store.mutationRejected(exc);
      }
    });

  const handlers = {
    selectNode: (nodeId: string) => store.update({ selectedNode: nodeId }),
    retry: () => poller.kick(),
    addTier: (nodeId: string, identity: string) =>
      runMutation(`add ${identity} on ${nodeId}`, async () => {
        const change = await api.addTier(nodeId, identity);
        return `added ${change.identity} on ${change.node_id} (instance ${change.instance_id})`;
      }),
    removeTier: (nodeId: string, identity: string) =>
      runMutation(`remove ${identity} on ${nodeId}`, async () => {
        const change = await api.removeTier(nodeId, identity);
        return `removed ${change.identity} on ${change.node_id} (instance ${change.instance_id})`;
      }),
    setStateFilter: (value: string | null) => {
      store.update({
        demandFilters: { ...store.current().demandFilters, state: value, cursor: 0 },
      });
      poller.kick();
    },
    setStageFilter: (value: string | null) => {
      store.update({
        demandFilters: { ...store.current().demandFilters, stage: value, cursor: 0 },
      });
      poller.kick();
    },
    firstPage: () => {
      store.update({
        demandFilters: { ...store.current().demandFilters, cursor: 0 },
      });
      poller.kick();
    },
    nextPage: (cursor: number) => {
      store.update({ demandFilters: { ...store.current().demandFilters, cursor } });
      poller.kick();
    },
    submit: (prepared: PreparedJob, file: File) =>
      runMutation(`submit ${prepared.mode} job`, async () => {
        const audio = new Uint8Array(await file.arrayBuffer());
        const request: JobRequest = buildJobRequest(prepared, audio);
        const created = await api.submitJob(request);
        store.update({ selectedJob: created.job_id });
        return `job ${created.job_id} accepted`;
      }),
    selectJob: (jobId: string) => {
      store.update({ selectedJob: jobId });
      poller.kick();
    },
  };

  const render = (): void => {
    const state = store.current();
    renderStatus(status, api, state.pollDelayMs, state.connected);
    renderTopology(topology, state, handlers);
    renderTierControls(tiers, state, offered ?? [], handlers);
    renderInspector(inspector, state, handlers);
    renderJobs(jobs, state, state.snapshot?.jobDetail ?? null, handlers);
    renderLog(logPane, state.log);
  };

  store.subscribe(render);
  render();

  // The snapshot age display goes stale between backed-off polls;
  // refresh just that text once a second without a full re-render.
  const ageTimer = setInterval(() => {
    const snapshot = store.current().snapshot;
    if (snapshot === null) return;
    const age = topology.querySelector("[data-age]");
    if (age !== null) {
      age.textContent = `updated ${Math.floor((Date.now() - snapshot.takenAt) / 1000)}s ago`;
    }
  }, 1000);

  poller.start();
  return {
    api,
    store,
    poller,
    queue,
    stop: () => {
      poller.stop();
      clearInterval(ageTimer);
    },
  };
}

function renderStatus(
  container: HTMLElement,
  api: ManagementApi,
  pollDelayMs: number,
  connected: boolean,
): void {
  clear(container);
  container.append(
    el("span", { class: "console-title" }, "edurt console"),
    el("span", { class: "gmt-url" }, api.baseUrl),
    el(
      "span",
      {
        class: connected ? "poll-state ok" : "poll-state down",
        "data-connected": String(connected),
      },
      connected
        ? `polling every ${(pollDelayMs / 1000).toFixed(0)}s`
        : "disconnected",
    ),
  );
}

function renderLog(container: HTMLElement, log: ReadonlyArray<{ at: number; level: string; text: string }>): void {
  clear(container);
  container.append(el("h2", {}, "Log"));
  const list = el("ul", { class: "log-list", "data-log": "true" });
  for (const entry of log.slice(-50)) {
    const stamp = new Date(entry.at).toLocaleTimeString();
    list.append(
      el(
        "li",
        { class: `log-${entry.level}` },
        `${stamp} ${entry.text}`,
      ),
    );
  }
  container.append(list);
}

const mount = typeof document !== "undefined"
  ? document.getElementById("edurt-console")
  : null;
if (mount !== null) {
  createConsole(mount, new ManagementApi(baseUrlFromEnvironment()));
}
