/** In-memory stand-in for the scoring service: a transparent linear model
 * behind the same endpoints, so contract tests can verify the UI displays
 * service numbers verbatim.
 */

import type { FetchLike } from '../src/api';
import type { FeatureInfo, FeatureMap } from '../src/types';

export interface StubCall {
  path: string;
  body: unknown;
}

const FEATURES: Array<FeatureInfo & { weight: number }> = [
  { code: 'aq_0', name: 'last score', group: 'AQ', mutable: false, direction: 0, weight: 30 },
  { code: 'aq_1', name: 'mean accuracy', group: 'AQ', mutable: false, direction: 0, weight: 10 },
  { code: 'bq_0', name: 'careless ratio', group: 'BQ', mutable: true, direction: -1, weight: -20 },
  { code: 'bq_1', name: 'skip ratio', group: 'BQ', mutable: true, direction: -1, weight: -5 },
  { code: 'tq_0', name: 'first look ratio', group: 'TQ', mutable: true, direction: 1, weight: 15 },
  { code: 'tq_1', name: 'pace', group: 'TQ', mutable: false, direction: 0, weight: 5 },
  { code: 'eq_0', name: 'practice minutes', group: 'EQ', mutable: true, direction: 1, weight: 25 },
  { code: 'eq_1', name: 'active days', group: 'EQ', mutable: true, direction: 1, weight: 10 },
];

const INTERCEPT = 15;
const BAND = 8;

export const STUB_BASELINE: FeatureMap = {
  aq_0: 0.4, aq_1: 0.5, bq_0: 0.6, bq_1: 0.4, tq_0: 0.3, tq_1: 0.5, eq_0: 0.2, eq_1: 0.3,
};

export function stubScore(features: FeatureMap): number {
  let y = INTERCEPT;
  for (const f of FEATURES) {
    y += f.weight * (features[f.code] ?? 0);
  }
  return Math.min(100, Math.max(0, y));
}

function attribution(features: FeatureMap) {
  // background fixed at 0.5 on every axis: base + sum(phi) == prediction
  let base = INTERCEPT;
  for (const f of FEATURES) {
    base += f.weight * 0.5;
  }
  const items = FEATURES.map((f) => ({
    code: f.code,
    name: f.name,
    group: f.group,
    value: features[f.code] ?? 0,
    phi: f.weight * ((features[f.code] ?? 0) - 0.5),
  })).sort((a, b) => Math.abs(b.phi) - Math.abs(a.phi));
  return { base, prediction: stubScore(features), items };
}

function nudges(features: FeatureMap, deltaY: number) {
  const base = stubScore(features);
  const target = Math.min(100, base + deltaY);
  let current = { ...features };
  const deltas: Array<{ code: string; delta: number; new_value: number; marginal_gain: number; message: string | null }> = [];
  const levers = FEATURES.filter((f) => f.mutable).sort(
    (a, b) => Math.abs(b.weight) - Math.abs(a.weight),
  );
  for (const f of levers) {
    if (stubScore(current) >= target - 0.5) {
      break;
    }
    const goal = f.weight > 0 ? 1 : 0;
    const prev = current[f.code];
    if (prev === goal) {
      continue;
    }
    const before = stubScore(current);
    current = { ...current, [f.code]: goal };
    deltas.push({
      code: f.code,
      delta: goal - prev,
      new_value: goal,
      marginal_gain: stubScore(current) - before,
      message: `adjust ${f.name}`,
    });
  }
  const newScore = stubScore(current);
  const status = newScore >= target - 0.5 ? 'achieved' : deltas.length ? 'partial' : 'infeasible';
  return {
    status,
    bucket: 2,
    base_score: base,
    new_score: newScore,
    target,
    target_clamped: base + deltaY > 100,
    deltas,
    messages: deltas.map((d) => d.message as string),
  };
}

export function makeStub(): { fetcher: FetchLike; calls: StubCall[] } {
  const calls: StubCall[] = [];

  const json = (payload: unknown, status = 200) =>
    Promise.resolve(
      new Response(JSON.stringify(payload), {
        status,
        headers: { 'content-type': 'application/json' },
      }),
    );

  const fetcher: FetchLike = (input, init) => {
    const path = input.replace(/^https?:\/\/[^/]+/, '');
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    calls.push({ path, body });

    if (path === '/v1/model/info') {
      return json({
        format_version: 1,
        n_features: FEATURES.length,
        buckets: [1, 2, 3, 4],
        features: FEATURES.map(({ weight: _w, ...f }) => f),
        sample_features: { '2': STUB_BASELINE },
        metrics: {},
      });
    }
    const features: FeatureMap = { ...(body?.features ?? {}) };
    for (const [code, value] of Object.entries<unknown>(body?.overrides ?? {})) {
      if (!FEATURES.some((f) => f.code === code)) {
        return json({ error: `unknown override code '${code}'` }, 400);
      }
      if (typeof value !== 'number' || value < 0 || value > 1) {
        return json({ error: `override '${code}' out of range [0, 1]` }, 422);
      }
      features[code] = value;
    }
    if (path === '/v1/predict') {
      const y = stubScore(features);
      return json({ yhat: y, q05: y - BAND, q95: y + BAND, bucket: 2 });
    }
    if (path === '/v1/whatif') {
      const y = stubScore(features);
      return json({ yhat: y, q05: y - BAND, q95: y + BAND, bucket: 2, attribution: attribution(features) });
    }
    if (path === '/v1/nudges') {
      return json(nudges(features, body?.delta_y ?? 10));
    }
    return json({ error: 'not found' }, 404);
  };

  return { fetcher, calls };
}
