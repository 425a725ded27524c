/** Shared test scaffolding: a recording fetch mock and a scriptable
 * in-memory stand-in for the management API. No real backend involved. */

import { vi } from "vitest";

import {
  DemandPage,
  DemandView,
  JobDetail,
  JobSummary,
  NodeView,
  StoreStats,
  TierSchema,
} from "../src/api.js";

export interface RecordedCall {
  method: string;
  url: string;
  /** Path plus query, origin stripped. */
  path: string;
  body: unknown;
}

export interface MockReply {
  status: number;
  json?: unknown;
}

export type Responder = (call: RecordedCall) => MockReply | undefined;

export interface MockFetch {
  calls: RecordedCall[];
  callsTo(method: string, pathPrefix: string): RecordedCall[];
}

/** Replace global fetch with a recorder backed by the responder; an
 * undefined reply answers 404 so stray requests fail loudly. */
export function installMockFetch(responder: Responder): MockFetch {
  const calls: RecordedCall[] = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = String(input);
      const method = init?.method ?? "GET";
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      let body: unknown;
      if (typeof init?.body === "string") {
        body = JSON.parse(init.body);
      }
      const call: RecordedCall = { method, url, path, body };
      calls.push(call);
      const reply = responder(call);
      if (reply === undefined) {
        return jsonResponse(404, {
          error: `unmatched ${method} ${path}`,
          code: "not-found",
        });
      }
      return jsonResponse(reply.status, reply.json ?? {});
    }),
  );
  return {
    calls,
    callsTo: (method, pathPrefix) =>
      calls.filter(
        (call) => call.method === method && call.path.startsWith(pathPrefix),
      ),
  };
}

function jsonResponse(status: number, document: unknown): Response {
  return new Response(JSON.stringify(document), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function tierBadgeCounts(node: NodeView): Record<string, number> {
  return Object.fromEntries(node.tiers.map((t) => [t.identity, t.count]));
}

function tiers(dst: number, dgt: number, dwt: number): NodeView["tiers"] {
  return [
    { identity: "DST", count: dst, state: dst > 0 ? "running" : "empty" },
    { identity: "DGT", count: dgt, state: dgt > 0 ? "running" : "empty" },
    { identity: "DWT", count: dwt, state: dwt > 0 ? "running" : "empty" },
  ];
}

export function threeNodes(): NodeView[] {
  return [
    {
      node_id: "hub",
      gmt: true,
      address: "127.0.0.1:7780",
      registered_at: 1700000000,
      tiers: tiers(1, 1, 1),
    },
    {
      node_id: "crunch",
      gmt: false,
      address: null,
      registered_at: 1700000100,
      tiers: tiers(0, 0, 2),
    },
    {
      node_id: "spare",
      gmt: false,
      address: null,
      registered_at: 1700000200,
      tiers: tiers(0, 0, 0),
    },
  ];
}

export function defaultSchemas(): Record<string, TierSchema> {
  const keys = (names: string[]): TierSchema["keys"] =>
    names.map((key) => ({ key, required: true }));
  return {
    GMT: { tier: "GMT", addable: false, keys: keys(["node.id", "manage.listen", "dst.listen"]) },
    DST: { tier: "DST", addable: true, keys: keys(["node.id", "gmt.address", "dst.listen"]) },
    DGT: { tier: "DGT", addable: true, keys: keys(["node.id", "gmt.address", "workload.file"]) },
    DWT: { tier: "DWT", addable: true, keys: keys(["node.id", "gmt.address", "workload.file"]) },
  };
}

export function emptyStats(): StoreStats {
  return {
    deposits: 0,
    withdrawals: 0,
    cache_hits: 0,
    requeues: 0,
    failures: 0,
    coalesced: 0,
    completed: 0,
    polls: 0,
    pending: {},
    in_process: 0,
    warehouse_size: 0,
  };
}

export function demand(overrides: Partial<DemandView> = {}): DemandView {
  return {
    id: "5e3c1a2b-0000-4000-8000-000000000001",
    signature: "ab".repeat(32),
    workload: "dmarf",
    stage: "classify",
    state: "COMPLETED",
    attempts: 1,
    content_kind: "application/octet-stream",
    payload_size: 2048,
    ...overrides,
  };
}

/**
 * Scriptable backend: serves the happy-path read endpoints from fields
 * tests may mutate, applies tier changes to its own node table, and can
 * be switched into failure modes per mutation kind.
 */
export class FakeBackend {
  nodes: NodeView[] = threeNodes();
  stats: StoreStats = emptyStats();
  demands: DemandPage = { demands: [], next_cursor: null };
  jobs: JobSummary[] = [];
  jobDetails: Record<string, JobDetail> = {};
  schemas: Record<string, TierSchema> = defaultSchemas();

  addTierMode: "ok" | "forbidden" = "ok";
  removeTierMode: "ok" | "conflict" = "ok";
  /** Read endpoints throw (connection refused) while true. */
  down = false;

  lastDemandQuery: string | null = null;
  private instanceCounter = 0;
  private jobCounter = 0;

  responder: Responder = (call) => {
    if (this.down && call.method === "GET") {
      throw new TypeError("fetch failed: connection refused");
    }
    return this.route(call);
  };

  private route(call: RecordedCall): MockReply | undefined {
    const [path, query = ""] = call.path.split("?");
    const parts = path.split("/").filter((p) => p !== "");
    if (call.method === "GET" && path === "/v1/nodes") {
      return { status: 200, json: { nodes: this.nodes } };
    }
    if (call.method === "GET" && path === "/v1/store/stats") {
      return { status: 200, json: this.stats };
    }
    if (call.method === "GET" && path === "/v1/demands") {
      this.lastDemandQuery = query;
      return { status: 200, json: this.demands };
    }
    if (call.method === "GET" && path === "/v1/jobs") {
      return { status: 200, json: { jobs: this.jobs } };
    }
    if (call.method === "GET" && parts[1] === "jobs" && parts.length === 3) {
      const detail = this.jobDetails[parts[2]];
      if (detail === undefined) {
        return { status: 404, json: { error: `no job named '${parts[2]}'`, code: "unknown-job" } };
      }
      return { status: 200, json: detail };
    }
    if (call.method === "GET" && parts[1] === "schema" && parts.length === 3) {
      const schema = this.schemas[parts[2]];
      if (schema === undefined) {
        return { status: 404, json: { error: `no tier named '${parts[2]}'`, code: "not-found" } };
      }
      return { status: 200, json: schema };
    }
    if (call.method === "POST" && path === "/v1/jobs") {
      return this.submitJob(call.body);
    }
    if (call.method === "POST" && parts[1] === "nodes" && parts[3] === "tiers") {
      return this.addTier(parts[2], call.body);
    }
    if (call.method === "DELETE" && parts[1] === "nodes" && parts[3] === "tiers") {
      return this.removeTier(parts[2], parts[4]);
    }
    return undefined;
  }

  private addTier(nodeId: string, body: unknown): MockReply {
    if (this.addTierMode === "forbidden") {
      return { status: 403, json: { error: "mutations are not allowed for this client", code: "forbidden" } };
    }
    const identity = (body as { identity?: string }).identity ?? "";
    const node = this.nodes.find((n) => n.node_id === nodeId);
    if (node === undefined) {
      return { status: 404, json: { error: `no node named '${nodeId}'`, code: "unknown-node" } };
    }
    const badge = node.tiers.find((t) => t.identity === identity);
    if (badge === undefined) {
      return { status: 422, json: { error: "identity must be one of DGT, DWT, DST, GMT", code: "validation" } };
    }
    badge.count += 1;
    badge.state = "running";
    this.instanceCounter += 1;
    return {
      status: 201,
      json: { node_id: nodeId, identity, instance_id: `${identity}-${this.instanceCounter}` },
    };
  }

  private submitJob(body: unknown): MockReply {
    const request = body as { mode?: string; speaker_id?: string };
    this.jobCounter += 1;
    const jobId =
      `00000000-0000-4000-8000-${String(this.jobCounter).padStart(12, "0")}`;
    const summary: JobSummary = {
      job_id: jobId,
      workload: "dmarf",
      mode: request.mode ?? "",
      stage: "preprocessing",
      state: "RUNNING",
      result_ready: false,
    };
    this.jobs = [summary, ...this.jobs];
    this.jobDetails[jobId] = {
      ...summary,
      speaker_id: request.speaker_id ?? null,
      created_at: 1700000300,
      finished_at: null,
      result: null,
      error: null,
    };
    return { status: 201, json: { job_id: jobId } };
  }

  private removeTier(nodeId: string, identity: string): MockReply {
    if (this.removeTierMode === "conflict") {
      return {
        status: 409,
        json: { error: `no ${identity} instance to remove on '${nodeId}'`, code: "nothing-to-remove" },
      };
    }
    const node = this.nodes.find((n) => n.node_id === nodeId);
    const badge = node?.tiers.find((t) => t.identity === identity);
    if (node === undefined || badge === undefined || badge.count === 0) {
      return {
        status: 409,
        json: { error: `no ${identity} instance to remove on '${nodeId}'`, code: "nothing-to-remove" },
      };
    }
    badge.count -= 1;
    if (badge.count === 0) badge.state = "empty";
    return {
      status: 200,
      json: { node_id: nodeId, identity, instance_id: `${identity}-gone`, removed: true },
    };
  }
}

/** Minimal file stand-in workable under jsdom; size can lie so the
 * oversize path needs no real 32 MiB buffer. */
export function fakeFile(
  name: string,
  bytes: Uint8Array,
  sizeOverride?: number,
): File {
  const file = {
    name,
    size: sizeOverride ?? bytes.length,
    arrayBuffer: async () =>
      bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength),
  };
  return file as unknown as File;
}

export function setFiles(input: HTMLInputElement, files: File[]): void {
  Object.defineProperty(input, "files", {
    value: files,
    configurable: true,
  });
}
