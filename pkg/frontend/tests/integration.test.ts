// @vitest-environment node
//
// End-to-end flow against the real inference service: a fixture image is
// uploaded over HTTP, the rendered card must show exactly three predictions
// in descending probability order, incomplete feedback is blocked before any
// request, and one confirmed feedback lands as one CSV row server-side.

import { readFileSync } from "node:fs";
import { JSDOM } from "jsdom";
import { afterAll, beforeAll, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { renderResultCard } from "../src/cards";
import { FeedbackForm } from "../src/feedback";
import type { ClassInfo, PredictionResponse } from "../src/types";
import {
  type ServiceHandle,
  feedbackCsvRows,
  startService,
} from "./helpers/service";

let service: ServiceHandle;
let api: ApiClient;
let doc: Document;
let classes: ClassInfo[];
let prediction: PredictionResponse;

beforeAll(async () => {
  service = await startService();
  api = new ApiClient(service.baseUrl);
  doc = new JSDOM("<main></main>").window.document;
  classes = await api.classes();

  const png = readFileSync(new URL("./helpers/fixture.png", import.meta.url));
  const responses = await api.predict([
    { blob: new Blob([png], { type: "image/png" }), name: "fixture.png" },
  ]);
  expect(responses).toHaveLength(1);
  prediction = responses[0]!;
}, 120_000);

afterAll(async () => {
  await service?.stop();
});

it("serves the full 18-class taxonomy to the dropdown", () => {
  expect(classes).toHaveLength(18);
  expect(classes[0]?.abbreviation).toBe("AH");
  for (const cls of classes) {
    expect(cls.definition.length).toBeGreaterThan(0);
  }
});

it("renders exactly three prediction entries in descending order", () => {
  const card = renderResultCard(doc, "fixture.png", null, prediction);
  const entries = [...card.querySelectorAll<HTMLElement>(".prediction-entry")];
  expect(entries).toHaveLength(3);
  const probs = entries.map((e) => Number(e.dataset.probability));
  expect(probs[0]).toBeGreaterThanOrEqual(probs[1]!);
  expect(probs[1]).toBeGreaterThanOrEqual(probs[2]!);
  for (const p of probs) {
    expect(p).toBeGreaterThan(0);
    expect(p).toBeLessThanOrEqual(1);
  }
});

it("blocks incomplete feedback client-side, before any request", async () => {
  const form = new FeedbackForm(doc, api, classes, prediction);
  expect(await form.submit()).toBe(false);
  expect(form.errorText()).not.toBe("");
  // nothing reached the server, so the log is still empty
  expect(feedbackCsvRows(service.dataDir)).toHaveLength(0);

  form.setVerdict("correct");
  form.setConsent("declined");
  expect(await form.submit()).toBe(false);
  expect(form.errorText()).toContain("pick the correct class");
  expect(feedbackCsvRows(service.dataDir)).toHaveLength(0);
});

it("records one CSV row for a confirmed feedback", async () => {
  const form = new FeedbackForm(doc, api, classes, prediction);
  form.setVerdict("confirm");
  form.setConsent("declined");
  expect(await form.submit()).toBe(true);
  expect(form.isLocked()).toBe(true);

  const rows = feedbackCsvRows(service.dataDir);
  expect(rows).toHaveLength(1);
  expect(rows[0]).toContain(prediction.image_id);
  expect(rows[0]).toContain("confirm");
});
