/** Per-card feedback form: confirm, correct via dropdown, or custom label.
 *
 * The form refuses to submit until the draft passes the same checks the
 * server applies, and it locks after one successful submission.
 */

import type { ApiClient } from "./api";
import type { ClassInfo, PredictionResponse, Verdict } from "./types";
import { type ConsentState, type FeedbackDraft, feedbackProblem } from "./validate";

export class FeedbackForm {
  readonly element: HTMLElement;

  private locked = false;
  private readonly verdictRadios: Record<Verdict, HTMLInputElement>;
  private readonly correctionSelect: HTMLSelectElement;
  private readonly customInput: HTMLInputElement;
  private readonly consentRadios: Record<"granted" | "declined", HTMLInputElement>;
  private readonly submitButton: HTMLButtonElement;
  private readonly errorLine: HTMLElement;
  private readonly statusLine: HTMLElement;

  constructor(
    doc: Document,
    private readonly api: Pick<ApiClient, "feedback">,
    private readonly classes: readonly ClassInfo[],
    private readonly prediction: PredictionResponse,
  ) {
    const form = doc.createElement("form");
    form.className = "feedback-form";
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });

    const verdictRow = doc.createElement("div");
    verdictRow.className = "verdict-row";
    const makeVerdict = (verdict: Verdict, text: string): HTMLInputElement => {
      const label = doc.createElement("label");
      const radio = doc.createElement("input");
      radio.type = "radio";
      radio.name = `verdict-${prediction.image_id}`;
      radio.value = verdict;
      radio.addEventListener("change", () => this.refreshControls());
      label.appendChild(radio);
      label.appendChild(doc.createTextNode(` ${text}`));
      verdictRow.appendChild(label);
      return radio;
    };
    this.verdictRadios = {
      confirm: makeVerdict("confirm", "top prediction is right"),
      correct: makeVerdict("correct", "it is another class"),
      custom: makeVerdict("custom", "none of these"),
    };
    form.appendChild(verdictRow);

    this.correctionSelect = doc.createElement("select");
    this.correctionSelect.className = "correction-select";
    const placeholder = doc.createElement("option");
    placeholder.value = "";
    placeholder.textContent = "choose a class";
    this.correctionSelect.appendChild(placeholder);
    for (const cls of classes) {
      const option = doc.createElement("option");
      option.value = cls.abbreviation;
      option.textContent = `${cls.name} (${cls.abbreviation})`;
      this.correctionSelect.appendChild(option);
    }
    form.appendChild(this.correctionSelect);

    this.customInput = doc.createElement("input");
    this.customInput.type = "text";
    this.customInput.className = "custom-label";
    this.customInput.placeholder = "describe the habitat";
    form.appendChild(this.customInput);

    const consentRow = doc.createElement("div");
    consentRow.className = "consent-row";
    const makeConsent = (
      value: "granted" | "declined",
      text: string,
    ): HTMLInputElement => {
      const label = doc.createElement("label");
      const radio = doc.createElement("input");
      radio.type = "radio";
      radio.name = `consent-${prediction.image_id}`;
      radio.value = value;
      label.appendChild(radio);
      label.appendChild(doc.createTextNode(` ${text}`));
      consentRow.appendChild(label);
      return radio;
    };
    this.consentRadios = {
      granted: makeConsent("granted", "store my photo to improve the model"),
      declined: makeConsent("declined", "do not store my photo"),
    };
    const reminder = doc.createElement("p");
    reminder.className = "consent-reminder";
    reminder.textContent =
      "Stored photos may be reviewed by surveyors; nothing is kept without consent.";
    consentRow.appendChild(reminder);
    form.appendChild(consentRow);

    this.submitButton = doc.createElement("button");
    this.submitButton.type = "submit";
    this.submitButton.textContent = "send feedback";
    form.appendChild(this.submitButton);

    this.errorLine = doc.createElement("p");
    this.errorLine.className = "form-error";
    form.appendChild(this.errorLine);

    this.statusLine = doc.createElement("p");
    this.statusLine.className = "form-status";
    form.appendChild(this.statusLine);

    this.element = form;
    this.refreshControls();
  }

  /** Current control state as a plain draft for validation. */
  draft(): FeedbackDraft {
    let verdict: Verdict | null = null;
    for (const [value, radio] of Object.entries(this.verdictRadios)) {
      if (radio.checked) verdict = value as Verdict;
    }
    let consent: ConsentState = "unset";
    if (this.consentRadios.granted.checked) consent = "granted";
    if (this.consentRadios.declined.checked) consent = "declined";
    return {
      verdict,
      correctedLabel:
        this.correctionSelect.value === "" ? null : this.correctionSelect.value,
      customLabel: this.customInput.value,
      consent,
    };
  }

  setVerdict(verdict: Verdict): void {
    this.verdictRadios[verdict].checked = true;
    this.refreshControls();
  }

  setCorrectedLabel(abbreviation: string): void {
    this.correctionSelect.value = abbreviation;
  }

  setCustomLabel(text: string): void {
    this.customInput.value = text;
  }

  setConsent(consent: "granted" | "declined"): void {
    this.consentRadios[consent].checked = true;
  }

  isLocked(): boolean {
    return this.locked;
  }

  errorText(): string {
    return this.errorLine.textContent ?? "";
  }

  /** Validate and send; returns true only when the server recorded it. */
  async submit(): Promise<boolean> {
    if (this.locked) {
      return false;
    }
    const draft = this.draft();
    const problem = feedbackProblem(
      draft,
      this.classes.map((c) => c.abbreviation),
    );
    if (problem !== null) {
      this.errorLine.textContent = problem;
      return false;
    }
    this.errorLine.textContent = "";

    const top = this.prediction.top3[0];
    if (top === undefined || draft.verdict === null) {
      this.errorLine.textContent = "nothing to give feedback on";
      return false;
    }
    try {
      await this.api.feedback({
        image_id: this.prediction.image_id,
        predicted_label: top.abbreviation,
        user_verdict: draft.verdict,
        corrected_label:
          draft.verdict === "correct" ? draft.correctedLabel : null,
        custom_label:
          draft.verdict === "custom" ? draft.customLabel.trim() : null,
        confidence_shown: top.probability,
        consent_to_store: draft.consent === "granted",
      });
    } catch (err) {
      this.errorLine.textContent = err instanceof Error ? err.message : String(err);
      return false;
    }
    this.lock();
    this.statusLine.textContent = "feedback recorded, thank you";
    return true;
  }

  private lock(): void {
    this.locked = true;
    this.element.classList.add("locked");
    for (const radio of Object.values(this.verdictRadios)) radio.disabled = true;
    for (const radio of Object.values(this.consentRadios)) radio.disabled = true;
    this.correctionSelect.disabled = true;
    this.customInput.disabled = true;
    this.submitButton.disabled = true;
  }

  private refreshControls(): void {
    if (this.locked) {
      return;
    }
    const draft = this.draft();
    this.correctionSelect.disabled = draft.verdict !== "correct";
    this.customInput.disabled = draft.verdict !== "custom";
  }
}
