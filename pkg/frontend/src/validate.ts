/**
 * Client-side validation for the two mutation forms.
 *
 * Validation runs before any request is built, so a rejected form never
 * produces network traffic. Field errors are keyed by field name for
 * inline display next to the offending input.
 */

import { JobRequest, ParamScalar, TierSchema } from "./api.js";

/** Tiers an operator may add or remove. GMT is never offered: there is
 * exactly one manager and the server would refuse it anyway. */
export const ADDABLE_TIERS = ["DST", "DGT", "DWT"] as const;

export const JOB_MODES = ["train", "classify"] as const;
export const AUDIO_FORMATS = ["pcm16le", "wav", "text"] as const;

/** Client-side upload bound; keeps the eventual stage payload (audio
 * plus envelope and training set) under the transport's 64 MiB frame
 * body limit with room to spare. */
export const MAX_UPLOAD_BYTES = 32 * 1024 * 1024;

export type FieldErrors = Record<string, string>;

export type Validated<T> =
  | { ok: true; value: T }
  | { ok: false; errors: FieldErrors };

/**
 * The identities the tier form may offer, from the server's schema
 * answers. Both gates apply: the server must call the tier addable and
 * the static allow-list must contain it, so GMT stays out even if a
 * server ever claimed otherwise.
 */
export function addableTiers(schemas: TierSchema[]): string[] {
  const allowed: readonly string[] = ADDABLE_TIERS;
  return schemas
    .filter((schema) => schema.addable && allowed.includes(schema.tier))
    .map((schema) => schema.tier);
}

export interface TierForm {
  nodeId: string;
  identity: string;
}

export function validateTierForm(
  nodeId: string | null,
  identity: string | null,
  offered: string[],
): Validated<TierForm> {
  const errors: FieldErrors = {};
  if (nodeId === null || nodeId === "") {
    errors.node = "pick a node";
  }
  if (identity === null || identity === "") {
    errors.identity = "pick a tier";
  } else if (!offered.includes(identity)) {
    errors.identity = `tier must be one of ${offered.join(", ")}`;
  }
  if (Object.keys(errors).length > 0) {
    return { ok: false, errors };
  }
  return { ok: true, value: { nodeId: nodeId as string, identity: identity as string } };
}

export interface JobForm {
  mode: string;
  speakerId: string;
  fileName: string | null;
  fileSize: number;
  format: string;
  feature: string;
  classifier: string;
  noise: boolean;
  silence: boolean;
  workload: string;
}

export interface PreparedJob {
  mode: string;
  format: string;
  workload: string;
  speakerId: string | null;
  params: Record<string, ParamScalar[]>;
}

/** Audio format from the file suffix; raw little-endian PCM otherwise. */
export function guessFormat(fileName: string): string {
  const lower = fileName.toLowerCase();
  if (lower.endsWith(".wav")) return "wav";
  if (lower.endsWith(".txt") || lower.endsWith(".text")) return "text";
  return "pcm16le";
}

export function validateJobForm(form: JobForm): Validated<PreparedJob> {
  const errors: FieldErrors = {};
  const modes: readonly string[] = JOB_MODES;
  const formats: readonly string[] = AUDIO_FORMATS;

  if (!modes.includes(form.mode)) {
    errors.mode = `mode must be one of ${JOB_MODES.join(", ")}`;
  }
  if (form.mode === "train" && form.speakerId.trim() === "") {
    errors.speaker = "training requires a speaker id";
  }
  if (form.fileName === null) {
    errors.file = "pick an audio file";
  } else if (form.fileSize === 0) {
    errors.file = "file is empty";
  } else if (form.fileSize > MAX_UPLOAD_BYTES) {
    const limitMiB = MAX_UPLOAD_BYTES / (1024 * 1024);
    errors.file = `file exceeds the ${limitMiB} MiB upload limit`;
  }
  if (!formats.includes(form.format)) {
    errors.format = `format must be one of ${AUDIO_FORMATS.join(", ")}`;
  }
  const feature = parsePositiveInt(form.feature);
  if (feature === null) {
    errors.feature = "feature method must be a positive integer";
  }
  const classifier = parsePositiveInt(form.classifier);
  if (classifier === null) {
    errors.classifier = "classifier must be a positive integer";
  }
  if (form.workload.trim() === "") {
    errors.workload = "workload must not be empty";
  }

  if (Object.keys(errors).length > 0) {
    return { ok: false, errors };
  }
  return {
    ok: true,
    value: {
      mode: form.mode,
      format: form.format,
      workload: form.workload.trim(),
      speakerId: form.speakerId.trim() === "" ? null : form.speakerId.trim(),
      params: {
        preprocessing: [form.noise, form.silence],
        feature_extraction: [feature as number],
        classification: [classifier as number],
      },
    },
  };
}

function parsePositiveInt(text: string): number | null {
  if (!/^\d+$/.test(text.trim())) return null;
  const value = Number(text.trim());
  return value > 0 ? value : null;
}

/** Standard base64, chunked so large buffers do not blow the arg limit. */
export function encodeBase64(bytes: Uint8Array): string {
  let binary = "";
  const CHUNK = 0x8000;
  for (let i = 0; i < bytes.length; i += CHUNK) {
    binary += String.fromCharCode(...bytes.subarray(i, i + CHUNK));
  }
  return btoa(binary);
}

export function buildJobRequest(
  prepared: PreparedJob,
  audio: Uint8Array,
): JobRequest {
  const request: JobRequest = {
    mode: prepared.mode,
    input: encodeBase64(audio),
    format: prepared.format,
    workload: prepared.workload,
    params: prepared.params,
  };
  if (prepared.speakerId !== null) {
    request.speaker_id = prepared.speakerId;
  }
  return request;
}
