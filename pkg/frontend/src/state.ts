/** Session state for the customization loop. Slider values are clamped to
 * their valid ranges; enhancement results are always server-produced. */

export interface EnhanceMetadata {
  omega: number;
  gamma: number;
  usedReference: boolean;
  modelId: string;
  latencyMs: number;
}

export interface EnhanceResult {
  blob: Blob;
  metadata: EnhanceMetadata;
}

export interface SessionState {
  inputImage: Blob | null;
  referenceImage: Blob | null;
  omega: number;
  gamma: number;
  lastResult: EnhanceResult | null;
  requestInFlight: boolean;
  error: string | null;
}

export const clamp01 = (v: number): number => Math.min(1, Math.max(0, v));

export function initialState(): SessionState {
  return {
    inputImage: null,
    referenceImage: null,
    omega: 0,
    gamma: 0.7,
    lastResult: null,
    requestInFlight: false,
    error: null,
  };
}

export function setOmega(state: SessionState, omega: number): SessionState {
  return { ...state, omega: clamp01(omega) };
}

export function setGamma(state: SessionState, gamma: number): SessionState {
  return { ...state, gamma: clamp01(gamma) };
}

export function setInput(state: SessionState, image: Blob | null): SessionState {
  return { ...state, inputImage: image, lastResult: null, error: null };
}

export function setReference(state: SessionState, image: Blob | null): SessionState {
  return { ...state, referenceImage: image };
}

export function canEnhance(state: SessionState): boolean {
  return state.inputImage !== null;
}
