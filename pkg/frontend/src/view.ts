/** Pure view-models: everything the DOM layer needs, derived only from the
 * latest service responses (formatting aside, no arithmetic on model output
 * beyond summing the attribution bars it was given).
 */

import { currentFeatures, ScenarioState } from './state';

export interface GaugeView {
  score: number;
  lo: number;
  hi: number;
  bucket: number;
  baselineScore: number | null;
}

export interface SliderView {
  code: string;
  name: string;
  value: number;
  baseline: number;
  locked: boolean;
  overridden: boolean;
  hint: string | null;
}

export interface SliderGroupView {
  group: string;
  sliders: SliderView[];
}

export interface WaterfallBar {
  code: string;
  name: string;
  phi: number;
}

export interface WaterfallView {
  base: number;
  bars: WaterfallBar[]; // sorted by |phi| descending; sums (with base) to total
  total: number;
}

export function gaugeView(state: ScenarioState): GaugeView | null {
  const r = state.last;
  if (!r) {
    return null;
  }
  return {
    score: r.yhat,
    lo: r.q05,
    hi: r.q95,
    bucket: r.bucket,
    baselineScore: state.baselineResponse?.yhat ?? null,
  };
}

export function sliderGroups(state: ScenarioState): SliderGroupView[] {
  if (!state.info) {
    return [];
  }
  const features = currentFeatures(state);
  const groups: SliderGroupView[] = [];
  for (const group of ['AQ', 'BQ', 'TQ', 'EQ']) {
    const sliders = state.info.features
      .filter((f) => f.group === group)
      .map((f) => ({
        code: f.code,
        name: f.name,
        value: features[f.code] ?? 0,
        baseline: state.baseline[f.code] ?? 0,
        locked: !f.mutable,
        overridden: f.code in state.overrides,
        hint: state.hints[f.code] ?? null,
      }));
    groups.push({ group, sliders });
  }
  return groups;
}

/** Attribution waterfall: top movers individually, the rest as one bar so
 * the rendered bars plus the base always sum to the displayed prediction.
 */
export function waterfallView(state: ScenarioState, topK = 10): WaterfallView | null {
  const r = state.last;
  if (!r) {
    return null;
  }
  const items = r.attribution.items; // already sorted by |phi| descending
  const bars: WaterfallBar[] = items
    .slice(0, topK)
    .map((i) => ({ code: i.code, name: i.name, phi: i.phi }));
  if (items.length > topK) {
    const rest = items.slice(topK).reduce((acc, i) => acc + i.phi, 0);
    bars.push({ code: '(rest)', name: `${items.length - topK} other features`, phi: rest });
  }
  return { base: r.attribution.base, bars, total: r.attribution.prediction };
}

export function waterfallSum(view: WaterfallView): number {
  return view.base + view.bars.reduce((acc, b) => acc + b.phi, 0);
}

export function formatPoints(x: number): string {
  return x.toFixed(2);
}
