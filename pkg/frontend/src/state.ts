/** Scenario state: one baseline vector plus the user's counterfactual edits.
 *
 * Overrides are sparse and only ever touch mutable features inside [0, 1].
 * The displayed numbers are always the latest service response, never a
 * client-side computation.
 */

import type { FeatureMap, ModelInfo, NudgeResponse, PredictResponse, WhatIfResponse } from './types';

export interface ScenarioState {
  info: ModelInfo | null;
  baseline: FeatureMap;
  overrides: FeatureMap;
  baselineResponse: PredictResponse | null;
  last: WhatIfResponse | null;
  targetGain: number;
  nudge: NudgeResponse | null;
  error: string | null;
  hints: Record<string, string>; // per-slider validation hints
  busy: boolean;
}

export function initialState(): ScenarioState {
  return {
    info: null,
    baseline: {},
    overrides: {},
    baselineResponse: null,
    last: null,
    targetGain: 10,
    nudge: null,
    error: null,
    hints: {},
    busy: false,
  };
}

export function currentFeatures(state: ScenarioState): FeatureMap {
  return { ...state.baseline, ...state.overrides };
}

export function isMutable(state: ScenarioState, code: string): boolean {
  const f = state.info?.features.find((d) => d.code === code);
  return f ? f.mutable : false;
}

/** Apply one slider edit; returns false if the feature is locked. */
export function setOverride(state: ScenarioState, code: string, value: number): boolean {
  if (!isMutable(state, code)) {
    return false;
  }
  const clamped = Math.min(1, Math.max(0, value));
  if (clamped === state.baseline[code]) {
    delete state.overrides[code]; // back on the baseline: no override
  } else {
    state.overrides[code] = clamped;
  }
  delete state.hints[code];
  return true;
}

/** Copy a nudge result's deltas onto the scenario so the user can iterate. */
export function applyNudgeDeltas(state: ScenarioState, nudge: NudgeResponse): void {
  for (const d of nudge.deltas) {
    setOverride(state, d.code, d.new_value);
  }
}

export function clearOverrides(state: ScenarioState): void {
  state.overrides = {};
  state.hints = {};
}
