/* tslint:disable */
/* eslint-disable */

/**
 * The first `p` eigenfunctions (intercept included) at `points` evenly
 * spaced times in `[0, 1]`.
 */
export function eigenbasis(p: number, grid_size: number, points: number): string;

/**
 * Hemoglobin contribution of one stay admitted on day 0 and discharged on
 * `length` with recovery rate `lambda`, from day -5 to `length + 60`.
 * `beta` holds one coefficient per inpatient-time basis function.
 */
export function hospital_effect(length: number, lambda: number, beta: Float64Array, m_max: number): string;

/**
 * Simulate a synthetic patient up to study day `t_star`, then `n` futures
 * to day 730 from the patient's true effects. `coupling` is the admission
 * hazard's log-rate change per g/dL of hemoglobin.
 */
export function simulate_futures(seed: bigint, n: number, t_star: number, coupling: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly eigenbasis: (a: number, b: number, c: number) => [number, number, number, number];
    readonly hospital_effect: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly simulate_futures: (a: bigint, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
