/** Thin typed client for the scoring service.
 *
 * Every number shown in the UI comes from these responses; the client never
 * recomputes model math.
 */

import type { FeatureMap, ModelInfo, NudgeResponse, PredictResponse, WhatIfResponse } from './types';

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetcher: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetcher(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const body = await resp.text();
    if (!resp.ok) {
      let detail = body;
      try {
        detail = (JSON.parse(body) as { error?: string }).error ?? body;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return JSON.parse(body) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  modelInfo(): Promise<ModelInfo> {
    return this.request<ModelInfo>('/v1/model/info');
  }

  predict(features: FeatureMap): Promise<PredictResponse> {
    return this.post<PredictResponse>('/v1/predict', { features });
  }

  whatIf(features: FeatureMap, overrides: FeatureMap): Promise<WhatIfResponse> {
    return this.post<WhatIfResponse>('/v1/whatif', { features, overrides });
  }

  nudges(features: FeatureMap, deltaY: number): Promise<NudgeResponse> {
    return this.post<NudgeResponse>('/v1/nudges', { features, delta_y: deltaY });
  }
}
