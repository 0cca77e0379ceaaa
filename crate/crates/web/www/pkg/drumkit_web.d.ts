/* tslint:disable */
/* eslint-disable */

/**
 * Runs the operator analysis on either the lifted transplantation between
 * the drums (`"transplant"`) or a rigid copy of drum 1 rotated by `angle`
 * (`"rigid"`), and returns the verdict and recovered motion.
 */
export function analyze_operator(ax: number, ay: number, bx: number, by: number, cx: number, cy: number, which: string, angle: number, seed: bigint): string;

/**
 * The `k` lowest Dirichlet eigenvalues of both drums and eigenfunction
 * `mode` (1-based) of each, on the level-`level` meshes.
 */
export function eigenvalues(ax: number, ay: number, bx: number, by: number, cx: number, cy: number, level: number, k: number, mode: number): string;

/**
 * Both drums of the propeller pair with their transplantation matrix.
 */
export function propeller(ax: number, ay: number, bx: number, by: number, cx: number, cy: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly analyze_operator: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: bigint) => [number, number, number, number];
    readonly eigenvalues: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
    readonly propeller: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
