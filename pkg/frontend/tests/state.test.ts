/** Store semantics, poll scheduling, and the mutation queue. */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiError, ConnectionLost } from "../src/api.js";
import { MutationQueue, Poller, Snapshot, StateStore } from "../src/state.js";

function snapshot(): Snapshot {
  return {
    nodes: [],
    stats: null,
    demands: null,
    jobs: [],
    jobDetail: null,
    takenAt: Date.now(),
  };
}

describe("state store", () => {
  it("marks the console connected when a snapshot arrives", () => {
    const store = new StateStore(1000);
    expect(store.current().connected).toBe(false);
    store.acceptSnapshot(snapshot());
    expect(store.current().connected).toBe(true);
    expect(store.current().readOnly).toBe(false);
  });

  it("keeps read-only sticky after a 403, across reconnects", () => {
    const store = new StateStore(1000);
    store.mutationRejected(new ApiError(403, "forbidden", "not allowed"));
    expect(store.current().readOnly).toBe(true);
    expect(store.current().forbidden).toBe(true);
    store.acceptSnapshot(snapshot());
    expect(store.current().readOnly).toBe(true);
    const logged = store.current().log.at(-1);
    expect(logged?.level).toBe("error");
    expect(logged?.text).toContain("not allowed");
    expect(logged?.text).toContain("403");
  });

  it("lifts connection-induced read-only on the next good poll", () => {
    const store = new StateStore(1000);
    store.mutationRejected(new ConnectionLost("api unreachable"));
    expect(store.current().readOnly).toBe(true);
    expect(store.current().connected).toBe(false);
    store.acceptSnapshot(snapshot());
    expect(store.current().readOnly).toBe(false);
    expect(store.current().connected).toBe(true);
  });

  it("caps the log length", () => {
    const store = new StateStore(1000);
    for (let i = 0; i < 250; i += 1) store.log("info", `entry ${i}`);
    expect(store.current().log).toHaveLength(200);
    expect(store.current().log[0]?.text).toBe("entry 50");
  });

  it("notifies subscribers on every update", () => {
    const store = new StateStore(1000);
    const seen: boolean[] = [];
    store.subscribe((state) => seen.push(state.connected));
    store.acceptSnapshot(snapshot());
    store.connectionLost();
    expect(seen).toEqual([true, false]);
  });
});

describe("poller", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("polls once per base interval while healthy", async () => {
    const store = new StateStore(1000);
    const poll = vi.fn(async () => {});
    const poller = new Poller(poll, store, 1000, 30000);
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(poll).toHaveBeenCalledTimes(1);
    await vi.advanceTimersByTimeAsync(1000);
    expect(poll).toHaveBeenCalledTimes(2);
    await vi.advanceTimersByTimeAsync(1000);
    expect(poll).toHaveBeenCalledTimes(3);
    poller.stop();
  });

  it("backs off exponentially to the cap and recovers on success", async () => {
    const store = new StateStore(1000);
    let healthy = false;
    const poll = vi.fn(async () => {
      if (!healthy) throw new Error("down");
    });
    const poller = new Poller(poll, store, 1000, 4000);
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(poll).toHaveBeenCalledTimes(1);
    expect(store.current().pollDelayMs).toBe(2000);
    expect(store.current().connected).toBe(false);

    await vi.advanceTimersByTimeAsync(1999);
    expect(poll).toHaveBeenCalledTimes(1);
    await vi.advanceTimersByTimeAsync(1);
    expect(poll).toHaveBeenCalledTimes(2);
    expect(store.current().pollDelayMs).toBe(4000);

    await vi.advanceTimersByTimeAsync(4000);
    expect(poll).toHaveBeenCalledTimes(3);
    expect(store.current().pollDelayMs).toBe(4000);

    healthy = true;
    await vi.advanceTimersByTimeAsync(4000);
    expect(poll).toHaveBeenCalledTimes(4);
    expect(store.current().pollDelayMs).toBe(1000);
    await vi.advanceTimersByTimeAsync(1000);
    expect(poll).toHaveBeenCalledTimes(5);
    poller.stop();
  });

  it("never overlaps polls, even across kicks and elapsed timers", async () => {
    const store = new StateStore(1000);
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    let first = true;
    const poll = vi.fn(() => {
      if (first) {
        first = false;
        return gate;
      }
      return Promise.resolve();
    });
    const poller = new Poller(poll, store, 1000, 30000);
    poller.start();
    expect(poll).toHaveBeenCalledTimes(1);

    poller.kick();
    await vi.advanceTimersByTimeAsync(5000);
    expect(poll).toHaveBeenCalledTimes(1);

    release();
    await vi.advanceTimersByTimeAsync(0);
    await vi.advanceTimersByTimeAsync(1000);
    expect(poll).toHaveBeenCalledTimes(2);
    poller.stop();
  });

  it("kick polls immediately and reschedules from that point", async () => {
    const store = new StateStore(1000);
    const poll = vi.fn(async () => {});
    const poller = new Poller(poll, store, 1000, 30000);
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(poll).toHaveBeenCalledTimes(1);

    await vi.advanceTimersByTimeAsync(400);
    poller.kick();
    expect(poll).toHaveBeenCalledTimes(2);

    // The pre-kick timer must be gone; the next poll is a full interval out.
    await vi.advanceTimersByTimeAsync(999);
    expect(poll).toHaveBeenCalledTimes(2);
    await vi.advanceTimersByTimeAsync(1);
    expect(poll).toHaveBeenCalledTimes(3);
    poller.stop();
  });

  it("goes quiet after stop", async () => {
    const store = new StateStore(1000);
    const poll = vi.fn(async () => {});
    const poller = new Poller(poll, store, 1000, 30000);
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    poller.stop();
    await vi.advanceTimersByTimeAsync(10000);
    expect(poll).toHaveBeenCalledTimes(1);
    poller.kick();
    expect(poll).toHaveBeenCalledTimes(1);
  });
});

describe("mutation queue", () => {
  it("runs tasks one at a time in submission order", async () => {
    const queue = new MutationQueue();
    const events: string[] = [];
    const gates: Array<() => void> = [];
    const task = (name: string) => () =>
      new Promise<void>((resolve) => {
        events.push(`start ${name}`);
        gates.push(() => {
          events.push(`end ${name}`);
          resolve();
        });
      });

    const done = Promise.all([
      queue.enqueue(task("a")),
      queue.enqueue(task("b")),
      queue.enqueue(task("c")),
    ]);
    await Promise.resolve();
    expect(events).toEqual(["start a"]);
    gates[0]!();
    await Promise.resolve();
    await Promise.resolve();
    expect(events).toEqual(["start a", "end a", "start b"]);
    gates[1]!();
    await Promise.resolve();
    await Promise.resolve();
    expect(events).toEqual(["start a", "end a", "start b", "end b", "start c"]);
    gates[2]!();
    await done;
    expect(events).toEqual([
      "start a",
      "end a",
      "start b",
      "end b",
      "start c",
      "end c",
    ]);
  });

  it("settles the enqueue promise only after the task finished", async () => {
    const queue = new MutationQueue();
    let finished = false;
    await queue.enqueue(async () => {
      await Promise.resolve();
      finished = true;
    });
    expect(finished).toBe(true);
    // The drain loop's own bookkeeping trails by a microtask.
    for (let i = 0; i < 3; i += 1) await Promise.resolve();
    expect(queue.pending).toBe(0);
  });
});
