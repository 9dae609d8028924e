/** Single-page flow: pick images, classify, review, send feedback.
 *
 * Each accepted file gets its own card with an independent request
 * lifecycle: pending placeholder, then the top-3 results, then the
 * feedback form. Image bytes go to /predict and nowhere else.
 */

import { ApiClient } from "./api";
import { renderResultCard } from "./cards";
import { FeedbackForm } from "./feedback";
import type { ClassInfo } from "./types";
import {
  ACCEPTED_EXTENSIONS,
  MAX_UPLOAD_BYTES,
  partitionSelection,
} from "./validate";

export async function init(doc: Document, api: ApiClient): Promise<void> {
  const root = doc.getElementById("app");
  if (root === null) {
    throw new Error("missing #app container");
  }

  const heading = doc.createElement("h1");
  heading.textContent = "Habitat classifier";
  root.appendChild(heading);

  const banner = doc.createElement("p");
  banner.className = "health-banner";
  root.appendChild(banner);

  const picker = doc.createElement("div");
  picker.className = "upload-picker";
  const input = doc.createElement("input");
  input.type = "file";
  input.multiple = true;
  input.accept = ACCEPTED_EXTENSIONS.join(",");
  picker.appendChild(input);

  const hint = doc.createElement("p");
  hint.className = "size-hint";
  const mb = (MAX_UPLOAD_BYTES / (1024 * 1024)).toFixed(0);
  hint.textContent = `JPEG or PNG photographs, up to ${mb} MB each.`;
  picker.appendChild(hint);

  const rejectedList = doc.createElement("ul");
  rejectedList.className = "rejected-files";
  picker.appendChild(rejectedList);

  const classifyButton = doc.createElement("button");
  classifyButton.type = "button";
  classifyButton.textContent = "classify";
  classifyButton.disabled = true;
  picker.appendChild(classifyButton);
  root.appendChild(picker);

  const cardsContainer = doc.createElement("div");
  cardsContainer.className = "cards";
  root.appendChild(cardsContainer);

  let classes: ClassInfo[] = [];
  try {
    const health = await api.health();
    banner.textContent = `model ${health.model_version ?? "(none)"} ready`;
    classes = await api.classes();
  } catch (err) {
    banner.textContent = `service unavailable: ${
      err instanceof Error ? err.message : String(err)
    }`;
    banner.classList.add("unhealthy");
  }

  let accepted: File[] = [];
  input.addEventListener("change", () => {
    const files = input.files === null ? [] : Array.from(input.files);
    const report = partitionSelection(files);
    accepted = report.accepted;
    rejectedList.replaceChildren();
    for (const { file, reason } of report.rejected) {
      const item = doc.createElement("li");
      item.textContent = `${file.name}: ${reason}`;
      rejectedList.appendChild(item);
    }
    classifyButton.disabled = accepted.length === 0;
  });

  classifyButton.addEventListener("click", () => {
    const batch = accepted;
    accepted = [];
    input.value = "";
    classifyButton.disabled = true;
    for (const file of batch) {
      void classifyOne(doc, api, classes, cardsContainer, file);
    }
  });
}

async function classifyOne(
  doc: Document,
  api: ApiClient,
  classes: ClassInfo[],
  container: HTMLElement,
  file: File,
): Promise<void> {
  const pending = doc.createElement("section");
  pending.className = "result-card pending";
  pending.textContent = `classifying ${file.name} ...`;
  container.appendChild(pending);

  try {
    const responses = await api.predict([{ blob: file, name: file.name }]);
    const response = responses[0];
    if (response === undefined) {
      throw new Error("empty prediction response");
    }
    const thumbnail = URL.createObjectURL(file);
    const card = renderResultCard(doc, file.name, thumbnail, response);
    const form = new FeedbackForm(doc, api, classes, response);
    card.appendChild(form.element);
    container.replaceChild(card, pending);
  } catch (err) {
    pending.classList.add("failed");
    pending.textContent = `${file.name}: ${
      err instanceof Error ? err.message : String(err)
    }`;
  }
}
