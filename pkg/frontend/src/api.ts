/** Thin fetch client for the editing service. */

import type {
  EstimatePayload,
  LightField,
  LightValue,
  RenderSettings,
} from "./types.js";

export const REVISION_HEADER = "X-Estimate-Revision";

export interface PreviewResult {
  blob: Blob;
  revision: number;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly field?: string,
  ) {
    super(message);
  }
}

/** Narrow interface so state logic can run against a mock in tests. */
export interface EditorApi {
  getEstimate(): Promise<EstimatePayload>;
  patchLight(field: LightField, value: LightValue): Promise<EstimatePayload>;
  renderPreview(settings: RenderSettings): Promise<PreviewResult>;
  maskUrl(revision: number): string;
  textureUrl(revision: number): string;
  layoutUrl(revision: number): string;
  putLayout(floor: number[][], ceiling: number[][]): Promise<EstimatePayload>;
}

async function parseError(res: Response): Promise<ApiError> {
  let detail = res.statusText;
  let field: string | undefined;
  try {
    const body = (await res.json()) as { detail?: { error?: string; field?: string } };
    if (body.detail) {
      detail = body.detail.error ?? detail;
      field = body.detail.field;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  return new ApiError(detail, res.status, field);
}

export class EditorClient implements EditorApi {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async getEstimate(): Promise<EstimatePayload> {
    const res = await fetch(this.url("/estimate"));
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as EstimatePayload;
  }

  async patchLight(field: LightField, value: LightValue): Promise<EstimatePayload> {
    const res = await fetch(this.url("/light"), {
      method: "PATCH",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ field, value }),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as EstimatePayload;
  }

  async renderPreview(settings: RenderSettings): Promise<PreviewResult> {
    const res = await fetch(this.url("/render"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(settings),
    });
    if (!res.ok) throw await parseError(res);
    const revision = Number(res.headers.get(REVISION_HEADER) ?? "-1");
    return { blob: await res.blob(), revision };
  }

  async putLayout(floor: number[][], ceiling: number[][]): Promise<EstimatePayload> {
    const res = await fetch(this.url("/layout"), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ floor, ceiling }),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as EstimatePayload;
  }

  // cache-busted image endpoints: the revision keys the browser cache
  maskUrl(revision: number): string {
    return this.url(`/mask?rev=${revision}`);
  }

  textureUrl(revision: number): string {
    return this.url(`/texture?rev=${revision}`);
  }

  layoutUrl(revision: number): string {
    return this.url(`/layout?rev=${revision}`);
  }
}
