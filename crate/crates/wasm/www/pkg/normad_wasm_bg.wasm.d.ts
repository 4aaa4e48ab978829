/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_xortrainer_free: (a: number, b: number) => void;
export const correlate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const lif_trace: (a: number, b: number, c: number) => [number, number, number, number];
export const xortrainer_new: (a: bigint, b: number) => [number, number, number];
export const xortrainer_snapshot: (a: number) => [number, number, number, number];
export const xortrainer_step: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
