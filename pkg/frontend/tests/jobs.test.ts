/** Job panel: submission gating and result rendering. */

// @vitest-environment jsdom

import { beforeEach, describe, expect, it } from "vitest";

import { JobDetail } from "../src/api.js";
import { renderJobs, JobHandlers } from "../src/jobs.js";
import { ConsoleState, Snapshot, initialState } from "../src/state.js";
import { PreparedJob } from "../src/validate.js";
import { fakeFile, setFiles } from "./helpers.js";

function stateWith(overrides: Partial<ConsoleState> = {}): ConsoleState {
  const snapshot: Snapshot = {
    nodes: [],
    stats: null,
    demands: null,
    jobs: [],
    jobDetail: null,
    takenAt: Date.now(),
  };
  return { ...initialState(1000), snapshot, connected: true, ...overrides };
}

function detailOf(overrides: Partial<JobDetail>): JobDetail {
  return {
    job_id: "0f0e0d0c-0000-4000-8000-00000000aaaa",
    workload: "dmarf",
    mode: "classify",
    stage: null,
    state: "COMPLETED",
    result_ready: true,
    speaker_id: null,
    created_at: 1700000000,
    finished_at: 1700000100,
    result: null,
    error: null,
    ...overrides,
  };
}

function recordingHandlers(): JobHandlers & {
  submissions: PreparedJob[];
  selections: string[];
} {
  const submissions: PreparedJob[] = [];
  const selections: string[] = [];
  return {
    submissions,
    selections,
    submit: async (prepared) => {
      submissions.push(prepared);
    },
    selectJob: (jobId) => selections.push(jobId),
  };
}

describe("job submission form", () => {
  let container: HTMLElement;

  beforeEach(() => {
    container = document.createElement("div");
    document.body.replaceChildren(container);
  });

  it("blocks an empty form with a field message and no submission", () => {
    const handlers = recordingHandlers();
    renderJobs(container, stateWith(), null, handlers);

    (container.querySelector('[data-action="submit-job"]') as HTMLButtonElement).click();
    const fileError = container.querySelector('[data-error-for="file"]');
    expect(fileError?.textContent).not.toBe("");
    expect(handlers.submissions).toHaveLength(0);
  });

  it("requires a speaker id when training", () => {
    const handlers = recordingHandlers();
    renderJobs(container, stateWith(), null, handlers);

    const mode = container.querySelector('[data-field="mode"]') as HTMLSelectElement;
    mode.value = "train";
    const fileInput = container.querySelector('[data-field="file"]') as HTMLInputElement;
    setFiles(fileInput, [fakeFile("voice.raw", new Uint8Array([1, 2]))]);
    (container.querySelector('[data-action="submit-job"]') as HTMLButtonElement).click();

    const speakerError = container.querySelector('[data-error-for="speaker"]');
    expect(speakerError?.textContent).toContain("speaker");
    expect(handlers.submissions).toHaveLength(0);
  });

  it("submits a valid classify form with the chosen knobs", async () => {
    const handlers = recordingHandlers();
    renderJobs(container, stateWith(), null, handlers);

    const mode = container.querySelector('[data-field="mode"]') as HTMLSelectElement;
    mode.value = "classify";
    const fileInput = container.querySelector('[data-field="file"]') as HTMLInputElement;
    setFiles(fileInput, [fakeFile("clip.wav", new Uint8Array([1, 2, 3, 4]))]);
    fileInput.dispatchEvent(new Event("change"));
    // The format follows the file suffix.
    const format = container.querySelector('[data-field="format"]') as HTMLSelectElement;
    expect(format.value).toBe("wav");

    (container.querySelector('[data-field="noise"]') as HTMLInputElement).checked = true;
    (container.querySelector('[data-action="submit-job"]') as HTMLButtonElement).click();
    await Promise.resolve();

    expect(handlers.submissions).toHaveLength(1);
    const prepared = handlers.submissions[0]!;
    expect(prepared.mode).toBe("classify");
    expect(prepared.format).toBe("wav");
    expect(prepared.params.preprocessing).toEqual([true, false]);
    expect(prepared.params.feature_extraction).toEqual([2]);
    expect(prepared.params.classification).toEqual([4]);
  });

  it("keeps the submit button off in read-only mode", () => {
    const handlers = recordingHandlers();
    renderJobs(container, stateWith({ readOnly: true }), null, handlers);

    const button = container.querySelector(
      '[data-action="submit-job"]',
    ) as HTMLButtonElement;
    expect(button.disabled).toBe(true);
    button.click();
    expect(handlers.submissions).toHaveLength(0);
  });
});

describe("job results", () => {
  let container: HTMLElement;

  beforeEach(() => {
    container = document.createElement("div");
    document.body.replaceChildren(container);
  });

  it("lists jobs and selects one on click", () => {
    const handlers = recordingHandlers();
    const state = stateWith();
    state.snapshot!.jobs = [
      {
        job_id: "aaaa0000-0000-4000-8000-000000000001",
        workload: "dmarf",
        mode: "classify",
        stage: "classification",
        state: "RUNNING",
        result_ready: false,
      },
    ];
    renderJobs(container, state, null, handlers);

    const row = container.querySelector("tr[data-job-id]") as HTMLTableRowElement;
    expect(row.textContent).toContain("classify");
    row.click();
    expect(handlers.selections).toEqual(["aaaa0000-0000-4000-8000-000000000001"]);
  });

  it("renders a ranking in ascending distance order from a shuffled answer", () => {
    const detail = detailOf({
      result: {
        ranking: [
          { speaker_id: "carol", distance: 0.9312 },
          { speaker_id: "alice", distance: 0.1204 },
          { speaker_id: "bob", distance: 0.5477 },
        ],
        top: "alice",
      },
    });
    renderJobs(container, stateWith(), detail, recordingHandlers());

    const rows = [...container.querySelectorAll("tr[data-speaker]")];
    expect(rows.map((r) => r.getAttribute("data-speaker"))).toEqual([
      "alice",
      "bob",
      "carol",
    ]);
    const first = rows[0]!.querySelector("[data-distance]");
    expect(first?.textContent).toBe("0.1204");
  });

  it("summarizes a training result", () => {
    const detail = detailOf({
      mode: "train",
      result: { training_set: "dmarf", speakers: ["alice", "bob"], vectors: 12 },
    });
    renderJobs(container, stateWith(), detail, recordingHandlers());

    const box = container.querySelector("[data-job-detail]");
    expect(box?.textContent).toContain("training set dmarf: 2 speakers, 12 vectors");
  });

  it("shows a failed job's error text", () => {
    const detail = detailOf({
      state: "FAILED",
      error: "demand-failed: unknown audio format",
    });
    renderJobs(container, stateWith(), detail, recordingHandlers());

    const error = container.querySelector(".job-error");
    expect(error?.textContent).toContain("unknown audio format");
  });
});
