/** JSON shapes exchanged with the inference service. */

export interface HealthInfo {
  status: string;
  model_version: string | null;
  uptime_seconds: number;
}

export interface ClassInfo {
  abbreviation: string;
  name: string;
  definition: string;
}

export interface TopEntry {
  abbreviation: string;
  name: string;
  definition: string;
  probability: number;
}

export interface PredictionResponse {
  image_id: string;
  top3: TopEntry[];
  model_version: string;
}

export type Verdict = "confirm" | "correct" | "custom";

export interface FeedbackPayload {
  image_id: string;
  predicted_label: string;
  user_verdict: Verdict;
  corrected_label: string | null;
  custom_label: string | null;
  confidence_shown: number;
  consent_to_store: boolean;
}

export interface FeedbackAck {
  status: string;
  image_id: string;
  retained: boolean;
}
