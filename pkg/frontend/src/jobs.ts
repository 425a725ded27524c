/**
 * Job panel: submit a train or classify run on one audio file and
 * follow submitted jobs to their results.
 *
 * The form validates entirely client-side before any bytes are read or
 * sent; an invalid form produces field-level messages and zero network
 * traffic. Classification results render as the ranked list the API
 * returns, nearest speaker first.
 */

import { JobDetail, RankingEntry } from "./api.js";
import { clear, el, fmtDistance } from "./dom.js";
import { ConsoleState } from "./state.js";
import {
  AUDIO_FORMATS,
  JOB_MODES,
  JobForm,
  PreparedJob,
  guessFormat,
  validateJobForm,
} from "./validate.js";

export interface JobHandlers {
  /** Resolves when the submission settled (accepted or rejected). */
  submit(prepared: PreparedJob, file: File): Promise<void>;
  selectJob(jobId: string): void;
}

export function renderJobs(
  container: HTMLElement,
  state: ConsoleState,
  detail: JobDetail | null,
  handlers: JobHandlers,
): void {
  clear(container);
  container.append(el("h2", {}, "Jobs"));
  container.append(jobForm(state, handlers));
  container.append(jobList(state, handlers));
  if (detail !== null) {
    container.append(jobDetail(detail));
  }
}

function jobForm(state: ConsoleState, handlers: JobHandlers): HTMLElement {
  const modeSelect = el("select", { "data-field": "mode" });
  for (const mode of JOB_MODES) {
    modeSelect.append(el("option", { value: mode }, mode));
  }
  const speakerInput = el("input", {
    type: "text",
    placeholder: "speaker id (train)",
    "data-field": "speaker",
  });
  const fileInput = el("input", { type: "file", "data-field": "file" });
  const formatSelect = el("select", { "data-field": "format" });
  for (const format of AUDIO_FORMATS) {
    formatSelect.append(el("option", { value: format }, format));
  }
  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (file !== undefined) formatSelect.value = guessFormat(file.name);
  });
  const featureInput = el("input", {
    type: "text",
    value: "2",
    size: "3",
    "data-field": "feature",
  });
  const classifierInput = el("input", {
    type: "text",
    value: "4",
    size: "3",
    "data-field": "classifier",
  });
  const noiseBox = el("input", { type: "checkbox", "data-field": "noise" });
  const silenceBox = el("input", { type: "checkbox", "data-field": "silence" });

  const errorSlots = new Map<string, HTMLElement>();
  const slot = (field: string): HTMLElement => {
    const span = el("span", { class: "field-error", "data-error-for": field });
    errorSlots.set(field, span);
    return span;
  };

  const submitButton = el("button", { "data-action": "submit-job" }, "Submit job");
  if (state.readOnly) submitButton.disabled = true;

  const submit = () => {
    if (submitButton.disabled) return;
    for (const span of errorSlots.values()) span.textContent = "";
    const file = fileInput.files?.[0] ?? null;
    const form: JobForm = {
      mode: modeSelect.value,
      speakerId: speakerInput.value,
      fileName: file === null ? null : file.name,
      fileSize: file === null ? 0 : file.size,
      format: formatSelect.value,
      feature: featureInput.value,
      classifier: classifierInput.value,
      noise: noiseBox.checked,
      silence: silenceBox.checked,
      workload: "dmarf",
    };
    const checked = validateJobForm(form);
    if (!checked.ok) {
      for (const [field, message] of Object.entries(checked.errors)) {
        const span = errorSlots.get(field);
        if (span !== undefined) span.textContent = message;
      }
      return;
    }
    submitButton.disabled = true;
    void handlers.submit(checked.value, file as File).finally(() => {
      submitButton.disabled = state.readOnly;
    });
  };
  submitButton.addEventListener("click", submit);

  return el(
    "div",
    { class: "job-form" },
    el("label", {}, "mode ", modeSelect, slot("mode")),
    el("label", {}, "speaker ", speakerInput, slot("speaker")),
    el("label", {}, "audio ", fileInput, slot("file")),
    el("label", {}, "format ", formatSelect, slot("format")),
    el("label", {}, "feature ", featureInput, slot("feature")),
    el("label", {}, "classifier ", classifierInput, slot("classifier")),
    el("label", {}, "noise ", noiseBox),
    el("label", {}, "silence ", silenceBox),
    submitButton,
  );
}

function jobList(state: ConsoleState, handlers: JobHandlers): HTMLElement {
  const jobs = state.snapshot?.jobs ?? [];
  if (jobs.length === 0) {
    return el("p", { class: "empty-state" }, "No jobs submitted yet.");
  }
  const head = el(
    "tr",
    {},
    el("th", {}, "job"),
    el("th", {}, "mode"),
    el("th", {}, "stage"),
    el("th", {}, "state"),
  );
  const table = el("table", { class: "job-table" }, el("thead", {}, head));
  const body = el("tbody");
  for (const job of jobs) {
    const row = el(
      "tr",
      { "data-job-id": job.job_id },
      el("td", { class: "job-id" }, job.job_id.slice(0, 8)),
      el("td", {}, job.mode),
      el("td", {}, job.stage ?? ""),
      el("td", {},
        el("span", { class: `chip chip-job-${job.state}` }, job.state)),
    );
    row.addEventListener("click", () => handlers.selectJob(job.job_id));
    if (state.selectedJob === job.job_id) row.classList.add("selected");
    body.append(row);
  }
  table.append(body);
  return table;
}

function jobDetail(detail: JobDetail): HTMLElement {
  const box = el(
    "div",
    { class: "job-detail", "data-job-detail": detail.job_id },
    el("h3", {}, `Job ${detail.job_id.slice(0, 8)} (${detail.mode})`),
  );
  if (detail.error !== null) {
    box.append(el("p", { class: "job-error" }, detail.error));
    return box;
  }
  const result = detail.result;
  if (result === null) {
    box.append(el("p", {}, `state: ${detail.state}, stage: ${detail.stage ?? "-"}`));
    return box;
  }
  if (result.ranking !== undefined) {
    box.append(rankingTable(result.ranking));
  }
  if (result.training_set !== undefined) {
    box.append(
      el(
        "p",
        {},
        `training set ${result.training_set}: ` +
          `${(result.speakers ?? []).length} speakers, ` +
          `${result.vectors ?? 0} vectors`,
      ),
    );
  }
  return box;
}

/** Ranked result: ascending distance, so the best match is row one. */
function rankingTable(ranking: RankingEntry[]): HTMLElement {
  const ranked = [...ranking].sort((a, b) =>
    a.distance === b.distance
      ? a.speaker_id.localeCompare(b.speaker_id)
      : a.distance - b.distance,
  );
  const head = el(
    "tr",
    {},
    el("th", {}, "rank"),
    el("th", {}, "speaker"),
    el("th", {}, "distance"),
  );
  const table = el("table", { class: "ranking-table" }, el("thead", {}, head));
  const body = el("tbody");
  ranked.forEach((entry, index) => {
    body.append(
      el(
        "tr",
        { "data-speaker": entry.speaker_id },
        el("td", {}, String(index + 1)),
        el("td", {}, entry.speaker_id),
        el("td", { "data-distance": String(entry.distance) }, fmtDistance(entry.distance)),
      ),
    );
  });
  table.append(body);
  return table;
}
