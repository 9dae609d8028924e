/** Result card: thumbnail plus the top-3 classes with probability bars. */

import { formatPercent } from "./format";
import type { PredictionResponse } from "./types";

export function renderResultCard(
  doc: Document,
  fileName: string,
  thumbnailUrl: string | null,
  response: PredictionResponse,
): HTMLElement {
  const card = doc.createElement("section");
  card.className = "result-card";
  card.dataset.imageId = response.image_id;

  const header = doc.createElement("header");
  header.className = "card-header";
  if (thumbnailUrl !== null) {
    const img = doc.createElement("img");
    img.className = "thumbnail";
    img.src = thumbnailUrl;
    img.alt = fileName;
    header.appendChild(img);
  }
  const title = doc.createElement("span");
  title.className = "file-name";
  title.textContent = fileName;
  header.appendChild(title);
  card.appendChild(header);

  const list = doc.createElement("ol");
  list.className = "prediction-list";
  // server order is already descending and breaks ties stably; keep it
  for (const entry of response.top3) {
    const item = doc.createElement("li");
    item.className = "prediction-entry";
    item.dataset.abbreviation = entry.abbreviation;
    item.dataset.probability = String(entry.probability);

    const label = doc.createElement("div");
    label.className = "entry-label";
    const name = doc.createElement("span");
    name.className = "class-name";
    name.textContent = `${entry.name} (${entry.abbreviation})`;
    const percent = doc.createElement("span");
    percent.className = "percent";
    percent.textContent = formatPercent(entry.probability);
    label.appendChild(name);
    label.appendChild(percent);
    item.appendChild(label);

    const bar = doc.createElement("div");
    bar.className = "bar";
    const fill = doc.createElement("div");
    fill.className = "bar-fill";
    fill.style.width = formatPercent(entry.probability);
    bar.appendChild(fill);
    item.appendChild(bar);

    const definition = doc.createElement("p");
    definition.className = "definition";
    definition.textContent = entry.definition;
    item.appendChild(definition);

    list.appendChild(item);
  }
  card.appendChild(list);
  return card;
}
