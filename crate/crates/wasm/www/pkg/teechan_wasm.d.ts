/* tslint:disable */
/* eslint-disable */

export function builtin_names(): string;

/**
 * Text of a built-in scenario, for editing in the page.
 */
export function builtin_scenario(name: string): string | undefined;

/**
 * Opens a channel, runs `payments` seeded lock-step payments and lets Bob
 * settle. `close_b` is Bob's closing balance in BTC, or empty.
 */
export function run_demo(deposit_a: string, deposit_b: string, fee: string, payments: number, close_b: string, seed: bigint): string;

/**
 * A random lossy schedule ending in an immediate close by Alice.
 */
export function run_random(seed: bigint, payments: number, p_drop: number, p_replay: number, p_reorder: number): string;

/**
 * Runs a scenario given in the text format. Parse errors are thrown.
 */
export function run_scenario(text: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly builtin_names: () => [number, number];
    readonly builtin_scenario: (a: number, b: number) => [number, number];
    readonly run_demo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: bigint) => [number, number, number, number];
    readonly run_random: (a: bigint, b: number, c: number, d: number, e: number) => [number, number];
    readonly run_scenario: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
