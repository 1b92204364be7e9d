/* tslint:disable */
/* eslint-disable */

/**
 * Rows `(x, p, q, m)` of the two box densities and the noisy base on `n`
 * points spanning both supports.
 */
export function base_measure_profile(theta: number, alpha: number, sigma2: number, n: number): Float64Array;

/**
 * Rows `(theta, f-divergence, scaled Bregman)` for `P = U[0,1]` against
 * `Q = U[theta, theta+1]`, `theta` on `n` points in `[0, theta_max]`, with
 * the noisy base at `alpha = 1/2` and variance `sigma2`.
 */
export function divergence_curves(f: string, sigma2: number, theta_max: number, n: number): Float64Array;

/**
 * Trains the shift of `U[theta, theta+1]` toward `U[0,1]` and returns the
 * rows `(step, theta, loss)`; step 0 is the initial value.
 */
export function train_shift(f: string, init: number, steps: number, lr: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly base_measure_profile: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly divergence_curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly train_shift: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
