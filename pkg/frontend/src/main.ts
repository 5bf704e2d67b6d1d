import { ApiClient } from './api';
import { ScenarioController } from './controller';
import { renderDashboard } from './render';

const API_BASE =
  new URLSearchParams(window.location.search).get('api') ?? 'http://127.0.0.1:8000';

const root = document.getElementById('app');
if (!root) {
  throw new Error('missing #app container');
}
const controller = new ScenarioController(new ApiClient(API_BASE));
controller.subscribe(() => renderDashboard(root, controller));
renderDashboard(root, controller);
void controller.load();
