/* tslint:disable */
/* eslint-disable */

/**
 * The 54-54-1 XOR network, trained one round-robin sweep at a time.
 */
export class XorTrainer {
    free(): void;
    [Symbol.dispose](): void;
    constructor(seed: bigint, train_hidden: boolean);
    /**
     * JSON `{ iteration, patterns: [{ desired, observed, c }] }` for the current weights.
     */
    snapshot(): string;
    /**
     * Runs `n` sweeps over the four patterns.
     */
    step(n: number): void;
}

/**
 * Correlation metric between two spike trains given as times in ms.
 *
 * Returns JSON with `c` and both low-passed traces for plotting.
 */
export function correlate(a: Float64Array, b: Float64Array, tau_lp: number, duration_ms: number): string;

/**
 * Membrane trace of a default LIF neuron under a constant current `i0` (pA).
 *
 * Returns JSON `{ "v": [...], "spikes": [...], "dt": .., "isi_closed_form": .. }`;
 * `isi_closed_form` is null below rheobase.
 */
export function lif_trace(i0: number, duration_ms: number, dt: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_xortrainer_free: (a: number, b: number) => void;
    readonly correlate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly lif_trace: (a: number, b: number, c: number) => [number, number, number, number];
    readonly xortrainer_new: (a: bigint, b: number) => [number, number, number];
    readonly xortrainer_snapshot: (a: number) => [number, number, number, number];
    readonly xortrainer_step: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
