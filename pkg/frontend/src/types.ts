/** Wire types mirroring the scoring service's JSON responses. */

export interface FeatureInfo {
  code: string;
  name: string;
  group: 'AQ' | 'BQ' | 'TQ' | 'EQ';
  mutable: boolean;
  direction: number;
}

export interface ModelInfo {
  format_version: number;
  n_features: number;
  buckets: number[];
  features: FeatureInfo[];
  sample_features: Record<string, Record<string, number>>;
  metrics: unknown;
}

export interface PredictResponse {
  yhat: number;
  q05: number;
  q95: number;
  bucket: number;
}

export interface AttributionItem {
  code: string;
  name: string;
  group: string;
  value: number | null;
  phi: number;
}

export interface Attribution {
  base: number;
  prediction: number;
  items: AttributionItem[];
}

export interface WhatIfResponse extends PredictResponse {
  attribution: Attribution;
}

export interface NudgeDelta {
  code: string;
  delta: number;
  new_value: number;
  marginal_gain: number;
  message: string | null;
}

export interface NudgeResponse {
  status: 'achieved' | 'partial' | 'infeasible';
  bucket: number;
  base_score: number;
  new_score: number;
  target: number;
  target_clamped: boolean;
  deltas: NudgeDelta[];
  messages: string[];
}

export type FeatureMap = Record<string, number>;
