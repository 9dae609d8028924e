import { describe, expect, it } from "vitest";

import { renderResultCard } from "../src/cards";
import { cannedPrediction } from "./helpers/fixture";

describe("result card", () => {
  it("renders exactly three entries in server order", () => {
    const card = renderResultCard(document, "photo.jpg", null, cannedPrediction());
    const entries = [...card.querySelectorAll(".prediction-entry")];
    expect(entries).toHaveLength(3);
    expect(entries.map((e) => (e as HTMLElement).dataset.abbreviation)).toEqual([
      "BOG",
      "WAT",
      "AH",
    ]);
  });

  it("shows one-decimal percentages and matching bar widths", () => {
    const card = renderResultCard(document, "photo.jpg", null, cannedPrediction());
    const percents = [...card.querySelectorAll(".percent")].map(
      (e) => e.textContent,
    );
    expect(percents).toEqual(["70.0%", "20.0%", "10.0%"]);
    // jsdom's serializer may drop the trailing .0, so compare numerically
    const widths = [...card.querySelectorAll<HTMLElement>(".bar-fill")].map(
      (e) => parseFloat(e.style.width),
    );
    expect(widths).toEqual([70, 20, 10]);
  });

  it("includes each class definition", () => {
    const card = renderResultCard(document, "photo.jpg", null, cannedPrediction());
    const definitions = [...card.querySelectorAll(".definition")].map(
      (e) => e.textContent,
    );
    expect(definitions).toEqual([
      "waterlogged peatland",
      "open water bodies",
      "cropped fields",
    ]);
  });

  it("preserves server order for tied probabilities", () => {
    const card = renderResultCard(
      document,
      "photo.jpg",
      null,
      cannedPrediction([0.4, 0.4, 0.2]),
    );
    const entries = [...card.querySelectorAll<HTMLElement>(".prediction-entry")];
    expect(entries.map((e) => e.dataset.abbreviation)).toEqual(["BOG", "WAT", "AH"]);
  });

  it("shows the file name and optional thumbnail", () => {
    const bare = renderResultCard(document, "walk.png", null, cannedPrediction());
    expect(bare.querySelector(".file-name")?.textContent).toBe("walk.png");
    expect(bare.querySelector(".thumbnail")).toBeNull();

    const withThumb = renderResultCard(
      document,
      "walk.png",
      "blob:fake",
      cannedPrediction(),
    );
    expect(withThumb.querySelector<HTMLImageElement>(".thumbnail")?.src).toContain(
      "blob:fake",
    );
  });
});
