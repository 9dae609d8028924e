/** Canned classes and predictions shared across the DOM unit tests. */

import type { ClassInfo, PredictionResponse } from "../../src/types";

export const THREE_CLASSES: ClassInfo[] = [
  { abbreviation: "AH", name: "Arable and Horticultural", definition: "cropped fields" },
  { abbreviation: "BOG", name: "Bog", definition: "waterlogged peatland" },
  { abbreviation: "WAT", name: "Water", definition: "open water bodies" },
];

export function cannedPrediction(
  probabilities: [number, number, number] = [0.7, 0.2, 0.1],
): PredictionResponse {
  return {
    image_id: "fixture-session",
    model_version: "fixture:tiny@epoch1",
    top3: [
      { ...THREE_CLASSES[1]!, probability: probabilities[0] },
      { ...THREE_CLASSES[2]!, probability: probabilities[1] },
      { ...THREE_CLASSES[0]!, probability: probabilities[2] },
    ],
  };
}
