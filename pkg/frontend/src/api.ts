/** Thin client for the enhancement service. The fetch function is
 * injectable so tests can drive it with a mock service. */

import type { EnhanceMetadata, EnhanceResult } from "./state.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface EnhanceParams {
  omega: number;
  gamma: number;
  reference: Blob | null;
}

export function paramsKey(params: EnhanceParams, input: Blob): string {
  // identity of a request: the parameter triple plus object identity of the
  // blobs (uploads are immutable per selection)
  const refTag = params.reference === null ? "none" : blobTag(params.reference);
  return `${params.omega}|${params.reference ? params.gamma : 0}|${refTag}|${blobTag(input)}`;
}

const tags = new WeakMap<Blob, string>();
let nextTag = 0;

function blobTag(blob: Blob): string {
  let tag = tags.get(blob);
  if (tag === undefined) {
    tag = `b${nextTag++}`;
    tags.set(blob, tag);
  }
  return tag;
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class EnhanceClient {
  constructor(
    private fetchLike: FetchLike,
    private baseUrl = "",
  ) {}

  async health(): Promise<{ status: string; model_id?: string }> {
    const resp = await this.fetchLike(`${this.baseUrl}/api/health`);
    return (await resp.json()) as { status: string; model_id?: string };
  }

  async enhance(input: Blob, params: EnhanceParams): Promise<EnhanceResult> {
    const form = new FormData();
    form.append("image", input, "input.png");
    form.append("omega", String(params.omega));
    if (params.reference !== null) {
      form.append("reference", params.reference, "reference.png");
      form.append("gamma", String(params.gamma));
    }
    const resp = await this.fetchLike(`${this.baseUrl}/api/enhance`, {
      method: "POST",
      body: form,
    });
    if (!resp.ok) {
      let detail = `service error ${resp.status}`;
      try {
        const body = (await resp.json()) as { error?: string };
        if (body.error) detail = body.error;
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(resp.status, detail);
    }
    const blob = await resp.blob();
    return { blob, metadata: parseMetadata(resp.headers) };
  }
}

export function parseMetadata(headers: Headers): EnhanceMetadata {
  return {
    omega: Number(headers.get("X-Omega") ?? "0"),
    gamma: Number(headers.get("X-Gamma") ?? "0"),
    usedReference: headers.get("X-Reference") === "true",
    modelId: headers.get("X-Model-Id") ?? "",
    latencyMs: Number(headers.get("X-Latency-Ms") ?? "0"),
  };
}
