/** Probabilities stay raw in API payloads; the UI shows one-decimal percent. */
export function formatPercent(probability: number): string {
  return `${(probability * 100).toFixed(1)}%`;
}
