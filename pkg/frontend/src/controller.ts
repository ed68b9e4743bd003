/** Orchestrates the customization loop: debounced parameter changes, at
 * most one in-flight request, latest-wins response handling. Stale
 * responses (from an earlier parameter set) are discarded both by sequence
 * number and by checking the response's echoed parameters. */

import { EnhanceClient, EnhanceParams, ServiceError, paramsKey } from "./api.js";
import { debounce, Debounced } from "./debounce.js";
import {
  EnhanceResult,
  SessionState,
  canEnhance,
  initialState,
  setGamma,
  setInput,
  setOmega,
  setReference,
} from "./state.js";

export type Listener = (state: SessionState) => void;

export const DEBOUNCE_MS = 250;

export class StudioController {
  state: SessionState = initialState();
  requestsIssued = 0;

  private seq = 0;
  private applied = -1;
  private inFlight = false;
  private queued: { input: Blob; params: EnhanceParams; key: string } | null = null;
  private listeners: Listener[] = [];
  private debouncedEnhance: Debounced<[]>;

  constructor(private client: EnhanceClient, debounceMs: number = DEBOUNCE_MS) {
    this.debouncedEnhance = debounce(() => this.enhanceNow(), debounceMs);
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private set(state: SessionState): void {
    this.state = state;
    this.emit();
  }

  setInputImage(image: Blob | null): void {
    this.set(setInput(this.state, image));
  }

  setReferenceImage(image: Blob | null): void {
    this.set(setReference(this.state, image));
  }

  /** Slider release: schedule a debounced re-enhance. */
  setOmega(omega: number): void {
    this.set(setOmega(this.state, omega));
    if (this.state.lastResult !== null) this.debouncedEnhance();
  }

  setGamma(gamma: number): void {
    this.set(setGamma(this.state, gamma));
    if (this.state.lastResult !== null && this.state.referenceImage !== null) {
      this.debouncedEnhance();
    }
  }

  /** Explicit enhance button: fires immediately. */
  enhance(): void {
    this.debouncedEnhance.cancel();
    void this.enhanceNow();
  }

  private currentParams(): EnhanceParams {
    return {
      omega: this.state.omega,
      gamma: this.state.gamma,
      reference: this.state.referenceImage,
    };
  }

  private async enhanceNow(): Promise<void> {
    if (!canEnhance(this.state)) return;
    const input = this.state.inputImage as Blob;
    const params = this.currentParams();
    const key = paramsKey(params, input);
    if (this.inFlight) {
      this.queued = { input, params, key };
      return;
    }
    await this.dispatch(input, params, key);
  }

  private async dispatch(input: Blob, params: EnhanceParams, key: string): Promise<void> {
    const mySeq = ++this.seq;
    this.inFlight = true;
    this.requestsIssued += 1;
    this.set({ ...this.state, requestInFlight: true });
    try {
      const result = await this.client.enhance(input, params);
      if (mySeq > this.applied && this.echoMatches(result, params)) {
        this.applied = mySeq;
        this.set({ ...this.state, lastResult: result, error: null });
      }
    } catch (err) {
      // keep the previous result visible; surface the failure
      const message = err instanceof ServiceError ? err.message : String(err);
      this.set({ ...this.state, error: message });
    } finally {
      this.inFlight = false;
      const queued = this.queued;
      this.queued = null;
      if (queued !== null && queued.key !== key) {
        await this.dispatch(queued.input, queued.params, queued.key);
      } else {
        this.set({ ...this.state, requestInFlight: false });
      }
    }
  }

  private echoMatches(result: EnhanceResult, params: EnhanceParams): boolean {
    const meta = result.metadata;
    const expectedGamma = params.reference !== null ? params.gamma : 0;
    return (
      meta.omega === params.omega &&
      meta.gamma === expectedGamma &&
      meta.usedReference === (params.reference !== null)
    );
  }
}
