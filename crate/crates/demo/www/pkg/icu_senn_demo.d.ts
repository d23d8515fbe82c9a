/* tslint:disable */
/* eslint-disable */

/**
 * AUROC, AUPRC and both curves for the given scores and 0/1 labels.
 */
export function curves(scores: Float64Array, labels: Uint8Array): string;

/**
 * `sigmoid(Σ relevance_j · concept_j)` with the per-concept contributions.
 */
export function recombine(concepts: Float64Array, relevance: Float64Array): string;

/**
 * One synthetic stay: latent organ dysfunction, hourly SOFA sub-scores,
 * the 24-hour-ahead concept targets and the mortality labels.
 */
export function simulate_stay(seed: bigint, dies: boolean): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly curves: (a: number, b: number, c: number, d: number) => [number, number];
    readonly recombine: (a: number, b: number, c: number, d: number) => [number, number];
    readonly simulate_stay: (a: bigint, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
