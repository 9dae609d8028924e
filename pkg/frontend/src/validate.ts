/** Client-side checks mirroring the service's upload and feedback rules.
 *
 * Anything rejected here would also be rejected server-side; catching it in
 * the browser just saves the round trip and gives an inline message.
 */

import type { Verdict } from "./types";

export const ACCEPTED_EXTENSIONS = [".jpg", ".jpeg", ".png"] as const;
export const MAX_UPLOAD_BYTES = 20 * 1024 * 1024;

/** The bits of File the validators need; tests can pass plain objects. */
export interface FileLike {
  name: string;
  size: number;
}

export function fileExtension(name: string): string {
  const dot = name.lastIndexOf(".");
  return dot <= 0 ? "" : name.slice(dot).toLowerCase();
}

/** Reason the file cannot be uploaded, or null when it is acceptable. */
export function uploadProblem(file: FileLike): string | null {
  const ext = fileExtension(file.name);
  if (!(ACCEPTED_EXTENSIONS as readonly string[]).includes(ext)) {
    const shown = ext === "" ? "(no extension)" : ext;
    return `unsupported format ${shown}; accepted: ${ACCEPTED_EXTENSIONS.join(", ")}`;
  }
  if (file.size > MAX_UPLOAD_BYTES) {
    const mb = (MAX_UPLOAD_BYTES / (1024 * 1024)).toFixed(0);
    return `larger than the ${mb} MB limit`;
  }
  return null;
}

export interface SelectionReport<T extends FileLike> {
  accepted: T[];
  rejected: { file: T; reason: string }[];
}

/** Split a picker selection into uploadable files and inline rejections. */
export function partitionSelection<T extends FileLike>(
  files: readonly T[],
): SelectionReport<T> {
  const report: SelectionReport<T> = { accepted: [], rejected: [] };
  for (const file of files) {
    const reason = uploadProblem(file);
    if (reason === null) {
      report.accepted.push(file);
    } else {
      report.rejected.push({ file, reason });
    }
  }
  return report;
}

/** Consent must be an explicit choice; an untouched form may not submit. */
export type ConsentState = "unset" | "granted" | "declined";

export interface FeedbackDraft {
  verdict: Verdict | null;
  correctedLabel: string | null;
  customLabel: string;
  consent: ConsentState;
}

/** Reason the draft cannot be submitted, or null when it is complete. */
export function feedbackProblem(
  draft: FeedbackDraft,
  knownLabels: readonly string[],
): string | null {
  if (draft.verdict === null) {
    return "choose confirm, correct, or custom label first";
  }
  if (draft.verdict === "correct") {
    if (draft.correctedLabel === null || draft.correctedLabel === "") {
      return "pick the correct class from the list";
    }
    if (!knownLabels.includes(draft.correctedLabel)) {
      return `unknown class ${draft.correctedLabel}`;
    }
  }
  if (draft.verdict === "custom" && draft.customLabel.trim() === "") {
    return "enter a custom label";
  }
  if (draft.consent === "unset") {
    return "choose whether this photo may be stored";
  }
  return null;
}
