/** Wires the scenario state to the service: slider edits debounce into
 * what-if calls, nudges run on demand, and every displayed number is taken
 * verbatim from the latest response.
 */

import { ApiClient, ApiError } from './api';
import { LatestWins } from './debounce';
import {
  applyNudgeDeltas,
  currentFeatures,
  initialState,
  ScenarioState,
  setOverride,
} from './state';
import type { WhatIfResponse } from './types';

export const DEBOUNCE_MS = 150;

export class ScenarioController {
  readonly state: ScenarioState = initialState();
  private readonly whatIf: LatestWins<WhatIfResponse>;
  private listeners: Array<() => void> = [];

  constructor(private readonly api: ApiClient) {
    this.whatIf = new LatestWins(
      DEBOUNCE_MS,
      () => this.api.whatIf(this.state.baseline, { ...this.state.overrides }),
      (resp) => {
        this.state.last = resp;
        this.state.error = null;
        this.notify();
      },
      (err) => {
        this.handleError(err);
        this.notify();
      },
    );
  }

  subscribe(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) {
      fn();
    }
  }

  /** Fetch model info, pick a starting scenario, and price the baseline. */
  async load(bucketKey?: string): Promise<void> {
    this.state.error = null;
    try {
      const info = await this.api.modelInfo();
      this.state.info = info;
      const keys = Object.keys(info.sample_features);
      if (keys.length === 0) {
        throw new ApiError(0, 'model has no sample scenarios');
      }
      const key = bucketKey && info.sample_features[bucketKey] ? bucketKey : keys[0];
      this.state.baseline = { ...info.sample_features[key] };
      this.state.overrides = {};
      this.state.nudge = null;
      const base = await this.api.predict(this.state.baseline);
      this.state.baselineResponse = base;
      const seeded = await this.api.whatIf(this.state.baseline, {});
      this.state.last = seeded;
    } catch (err) {
      this.handleError(err);
    }
    this.notify();
  }

  /** Slider edit: clamp, store, and debounce one what-if request. */
  onSliderChange(code: string, value: number): void {
    if (!setOverride(this.state, code, value)) {
      return; // locked feature: no state change, no request
    }
    this.whatIf.trigger();
    this.notify();
  }

  /** Explicit (non-debounced) recompute, used by retry and nudge-apply. */
  recompute(): void {
    this.whatIf.flush();
  }

  async requestNudges(deltaY?: number): Promise<void> {
    const dy = deltaY ?? this.state.targetGain;
    this.state.targetGain = dy;
    this.state.busy = true;
    this.notify();
    try {
      this.state.nudge = await this.api.nudges(currentFeatures(this.state), dy);
      this.state.error = null;
    } catch (err) {
      this.handleError(err);
    }
    this.state.busy = false;
    this.notify();
  }

  /** Copy the nudge deltas onto the sliders and requery. */
  applyNudge(): void {
    if (!this.state.nudge) {
      return;
    }
    applyNudgeDeltas(this.state, this.state.nudge);
    this.recompute();
    this.notify();
  }

  private handleError(err: unknown): void {
    if (err instanceof ApiError && err.status === 422) {
      // out-of-range override: surface as a hint on the offending slider
      const match = /'([a-z0-9_]+)'/.exec(err.message);
      if (match) {
        this.state.hints[match[1]] = err.message;
        return;
      }
    }
    this.state.error = err instanceof Error ? err.message : String(err);
  }
}
