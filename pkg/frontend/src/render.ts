/** DOM rendering for the what-if dashboard: a score gauge with the 90% band,
 * grouped sliders (locked ones disabled), the attribution waterfall, and the
 * nudge panel.
 */

import { ScenarioController } from './controller';
import { formatPoints, gaugeView, sliderGroups, waterfallView } from './view';

export function renderDashboard(root: HTMLElement, ctl: ScenarioController): void {
  root.textContent = '';
  const state = ctl.state;

  if (state.error) {
    const box = el('div', 'error-box');
    box.append(el('p', '', `Service error: ${state.error}`));
    const retry = el('button', 'retry', 'Retry') as HTMLButtonElement;
    retry.onclick = () => void ctl.load();
    box.append(retry);
    root.append(box);
    return;
  }
  if (!state.info || !state.last) {
    root.append(el('p', 'loading', 'Loading model…'));
    return;
  }

  root.append(renderGauge(state, ctl));
  const columns = el('div', 'columns');
  columns.append(renderSliders(ctl));
  const right = el('div', 'right-column');
  right.append(renderWaterfall(ctl));
  right.append(renderNudgePanel(ctl));
  columns.append(right);
  root.append(columns);
}

function renderGauge(state: ScenarioController['state'], ctl: ScenarioController): HTMLElement {
  const g = gaugeView(state)!;
  const box = el('section', 'gauge');
  box.append(el('h2', '', 'Predicted score'));
  const scoreRow = el('div', 'score-row');
  scoreRow.append(el('span', 'score-value', formatPoints(g.score)));
  scoreRow.append(el('span', 'score-band', `90% band [${formatPoints(g.lo)}, ${formatPoints(g.hi)}]`));
  scoreRow.append(el('span', 'score-bucket', `bucket B${g.bucket}`));
  if (g.baselineScore !== null) {
    const delta = g.score - g.baselineScore;
    scoreRow.append(el('span', 'score-delta', `${delta >= 0 ? '+' : ''}${formatPoints(delta)} vs baseline`));
  }
  box.append(scoreRow);

  const track = el('div', 'gauge-track');
  const band = el('div', 'gauge-band');
  band.style.left = `${g.lo}%`;
  band.style.width = `${Math.max(0, g.hi - g.lo)}%`;
  const marker = el('div', 'gauge-marker');
  marker.style.left = `${g.score}%`;
  track.append(band, marker);
  box.append(track);

  const reset = el('button', 'reset', 'Reset overrides') as HTMLButtonElement;
  reset.onclick = () => {
    for (const code of Object.keys(ctl.state.overrides)) {
      ctl.onSliderChange(code, ctl.state.baseline[code] ?? 0);
    }
  };
  box.append(reset);
  return box;
}

function renderSliders(ctl: ScenarioController): HTMLElement {
  const box = el('section', 'sliders');
  for (const group of sliderGroups(ctl.state)) {
    const details = document.createElement('details');
    details.open = group.group !== 'AQ';
    const summary = document.createElement('summary');
    summary.textContent = `${group.group}: ${groupTitle(group.group)}`;
    details.append(summary);
    for (const s of group.sliders) {
      const row = el('div', s.locked ? 'slider-row locked' : 'slider-row');
      const label = el('label', 'slider-label', `${s.code} ${s.name}`);
      label.setAttribute('for', `slider-${s.code}`);
      const input = document.createElement('input');
      input.type = 'range';
      input.id = `slider-${s.code}`;
      input.min = '0';
      input.max = '1';
      input.step = '0.01';
      input.value = String(s.value);
      input.disabled = s.locked;
      input.oninput = () => ctl.onSliderChange(s.code, Number(input.value));
      const value = el('span', s.overridden ? 'slider-value overridden' : 'slider-value', s.value.toFixed(2));
      row.append(label, input, value);
      if (s.hint) {
        row.append(el('span', 'slider-hint', s.hint));
      }
      details.append(row);
    }
    box.append(details);
  }
  return box;
}

function renderWaterfall(ctl: ScenarioController): HTMLElement {
  const box = el('section', 'waterfall');
  box.append(el('h2', '', 'Why this score'));
  const w = waterfallView(ctl.state);
  if (!w) {
    return box;
  }
  box.append(el('p', 'waterfall-base', `base ${formatPoints(w.base)}`));
  const maxAbs = Math.max(...w.bars.map((b) => Math.abs(b.phi)), 1e-9);
  for (const bar of w.bars) {
    const row = el('div', 'bar-row');
    row.append(el('span', 'bar-label', `${bar.code}`));
    const track = el('div', 'bar-track');
    const fill = el('div', bar.phi >= 0 ? 'bar-fill pos' : 'bar-fill neg');
    fill.style.width = `${(Math.abs(bar.phi) / maxAbs) * 100}%`;
    fill.title = bar.name;
    track.append(fill);
    row.append(track);
    row.append(el('span', 'bar-phi', `${bar.phi >= 0 ? '+' : ''}${formatPoints(bar.phi)}`));
    box.append(row);
  }
  box.append(el('p', 'waterfall-total', `prediction ${formatPoints(w.total)}`));
  return box;
}

function renderNudgePanel(ctl: ScenarioController): HTMLElement {
  const state = ctl.state;
  const box = el('section', 'nudges');
  box.append(el('h2', '', 'Nudges'));
  const controls = el('div', 'nudge-controls');
  const input = document.createElement('input');
  input.type = 'number';
  input.value = String(state.targetGain);
  input.min = '1';
  input.max = '50';
  input.id = 'nudge-gain';
  const button = el('button', 'nudge-go', state.busy ? 'Working…' : 'Suggest changes') as HTMLButtonElement;
  button.disabled = state.busy;
  button.onclick = () => void ctl.requestNudges(Number(input.value));
  controls.append(el('label', '', 'Target gain (points): '), input, button);
  box.append(controls);

  const n = state.nudge;
  if (!n) {
    return box;
  }
  if (n.status === 'infeasible') {
    box.append(el('p', 'nudge-empty', 'No feasible change reaches that target. Try a smaller gain.'));
    return box;
  }
  box.append(
    el(
      'p',
      'nudge-status',
      `${n.status}: ${formatPoints(n.base_score)} → ${formatPoints(n.new_score)} (target ${formatPoints(n.target)})`,
    ),
  );
  for (const d of n.deltas) {
    box.append(
      el(
        'p',
        'nudge-delta',
        `${d.code}: ${d.delta >= 0 ? '+' : ''}${d.delta.toFixed(2)} → ${d.new_value.toFixed(2)} (+${formatPoints(d.marginal_gain)} pts)`,
      ),
    );
  }
  for (const msg of n.messages) {
    box.append(el('p', 'nudge-message', `• ${msg}`));
  }
  const apply = el('button', 'nudge-apply', 'Apply to sliders') as HTMLButtonElement;
  apply.onclick = () => ctl.applyNudge();
  box.append(apply);
  return box;
}

function groupTitle(group: string): string {
  switch (group) {
    case 'AQ':
      return 'academic state (locked: earned, not set)';
    case 'BQ':
      return 'behavior on tests';
    case 'TQ':
      return 'test-taking mechanics';
    case 'EQ':
      return 'effort between tests';
    default:
      return group;
  }
}

function el(tag: string, className = '', text = ''): HTMLElement {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}
