/**
 * Console state and the two schedulers around it.
 *
 * The store is the single source of truth for rendering. Nothing in the
 * UI marks a mutation as applied; topology and counters only ever change
 * when a poll brings back fresh server state, so what the operator sees
 * is always something the API actually said.
 */

import {
  ApiError,
  ConnectionLost,
  DemandPage,
  JobDetail,
  JobSummary,
  NodeView,
  StoreStats,
} from "./api.js";

export interface Snapshot {
  nodes: NodeView[];
  stats: StoreStats | null;
  demands: DemandPage | null;
  jobs: JobSummary[];
  jobDetail: JobDetail | null;
  takenAt: number;
}

export interface LogEntry {
  at: number;
  level: "info" | "error";
  text: string;
}

export interface DemandFilters {
  state: string | null;
  stage: string | null;
  cursor: number;
}

export interface ConsoleState {
  snapshot: Snapshot | null;
  connected: boolean;
  /** Mutations disabled after a 403 or a mutation-time connection loss. */
  readOnly: boolean;
  /** A 403 is sticky; reconnecting does not lift it. */
  forbidden: boolean;
  selectedNode: string | null;
  selectedJob: string | null;
  demandFilters: DemandFilters;
  log: LogEntry[];
  pollDelayMs: number;
}

const LOG_LIMIT = 200;

export function initialState(pollDelayMs: number): ConsoleState {
  return {
    snapshot: null,
    connected: false,
    readOnly: false,
    forbidden: false,
    selectedNode: null,
    selectedJob: null,
    demandFilters: { state: null, stage: null, cursor: 0 },
    log: [],
    pollDelayMs,
  };
}

export type Listener = (state: ConsoleState) => void;

export class StateStore {
  private state: ConsoleState;
  private listeners: Listener[] = [];

  constructor(pollDelayMs: number) {
    this.state = initialState(pollDelayMs);
  }

  current(): ConsoleState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  update(change: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...change };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  log(level: "info" | "error", text: string): void {
    const entry: LogEntry = { at: Date.now(), level, text };
    this.update({ log: [...this.state.log, entry].slice(-LOG_LIMIT) });
  }

  /** Record a fresh poll result; reconnecting lifts connection-induced
   * read-only but never a 403. */
  acceptSnapshot(snapshot: Snapshot): void {
    this.update({
      snapshot,
      connected: true,
      readOnly: this.state.forbidden,
    });
  }

  connectionLost(): void {
    this.update({ connected: false });
  }

  mutationRejected(error: unknown): void {
    if (error instanceof ApiError) {
      // Server errors reach the operator verbatim.
      this.log("error", `${error.code} (HTTP ${error.status}): ${error.message}`);
      if (error.status === 403) {
        this.update({ readOnly: true, forbidden: true });
      }
      return;
    }
    if (error instanceof ConnectionLost) {
      this.log("error", error.message);
      this.update({ readOnly: true, connected: false });
      return;
    }
    this.log("error", String(error));
  }
}

/**
 * Runs the poll function on a fixed cadence with exponential backoff on
 * failure. The next run is scheduled only after the previous one
 * settles, so at most one poll is ever in flight.
 */
export class Poller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private delayMs: number;
  private running = false;
  private inFlight = false;

  constructor(
    private readonly poll: () => Promise<void>,
    private readonly store: StateStore,
    readonly baseMs = 1000,
    readonly capMs = 30000,
  ) {
    this.delayMs = baseMs;
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    void this.run();
  }

  stop(): void {
    this.running = false;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** Poll now instead of waiting out the current delay. */
  kick(): void {
    if (!this.running || this.inFlight) return;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    void this.run();
  }

  private async run(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.poll();
      this.delayMs = this.baseMs;
    } catch {
      this.delayMs = Math.min(this.delayMs * 2, this.capMs);
      this.store.connectionLost();
    } finally {
      this.inFlight = false;
      this.store.update({ pollDelayMs: this.delayMs });
      if (this.running) {
        this.timer = setTimeout(() => void this.run(), this.delayMs);
      }
    }
  }
}

/** FIFO queue of mutations; one request against the API at a time. */
export class MutationQueue {
  private queue: Array<() => Promise<void>> = [];
  private draining = false;

  /** Resolves once the task itself settled; tasks must not throw. */
  enqueue(task: () => Promise<void>): Promise<void> {
    return new Promise((resolve) => {
      this.queue.push(async () => {
        try {
          await task();
        } finally {
          resolve();
        }
      });
      void this.drain();
    });
  }

  get pending(): number {
    return this.queue.length + (this.draining ? 1 : 0);
  }

  private async drain(): Promise<void> {
    if (this.draining) return;
    this.draining = true;
    try {
      let task = this.queue.shift();
      while (task !== undefined) {
        await task();
        task = this.queue.shift();
      }
    } finally {
      this.draining = false;
    }
  }
}
