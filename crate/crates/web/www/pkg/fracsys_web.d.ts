/* tslint:disable */
/* eslint-disable */

/**
 * Regime and Rellich factor of (p, q) as a JSON object.
 */
export function classify(p: number, q: number, n: number, s: number): string;

/**
 * Solves the system on (−1, 1) and returns the record summary plus x, u, v as JSON.
 */
export function solve_interval(p: number, q: number, s: number, resolution: number): string;

/**
 * Torsion function of (−1, 1): returns `[x, w, exact]` triples flattened,
 * where w solves (−Δ)^s w = 1 on the grid and exact is (1 − x²)^s / K.
 */
export function torsion_profile(s: number, resolution: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly classify: (a: number, b: number, c: number, d: number) => [number, number];
    readonly solve_interval: (a: number, b: number, c: number, d: number) => [number, number];
    readonly torsion_profile: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
