import { colorForPreset } from './palette.js';

// Pure pixel-buffer helpers for the preview pane; main.ts wraps the
// results in ImageData for the canvas.

export function renderMapOverlay(
    cells: Int32Array,
    width: number,
    height: number,
    alpha = 128
): Uint8ClampedArray<ArrayBuffer> {
    if (cells.length !== width * height) {
        throw new Error('cell count does not match dimensions');
    }
    const rgba = new Uint8ClampedArray(width * height * 4);
    for (let i = 0; i < cells.length; i++) {
        const [r, g, b] = colorForPreset(cells[i]);
        rgba[i * 4] = r;
        rgba[i * 4 + 1] = g;
        rgba[i * 4 + 2] = b;
        rgba[i * 4 + 3] = alpha;
    }
    return rgba;
}

// Wipe comparison: columns left of the split show `after`, the rest show
// `before`.  fraction 0 is the pure input, fraction 1 the pure output.
export function wipeComposite(
    before: Uint8ClampedArray,
    after: Uint8ClampedArray,
    width: number,
    height: number,
    fraction: number
): Uint8ClampedArray<ArrayBuffer> {
    if (before.length !== width * height * 4 || after.length !== before.length) {
        throw new Error('buffer sizes do not match dimensions');
    }
    const f = Math.min(1, Math.max(0, fraction));
    const split = Math.round(f * width);
    const out = new Uint8ClampedArray(before.length);
    for (let y = 0; y < height; y++) {
        const rowStart = y * width * 4;
        const splitByte = rowStart + split * 4;
        out.set(after.subarray(rowStart, splitByte), rowStart);
        out.set(before.subarray(splitByte, rowStart + width * 4), splitByte);
    }
    return out;
}
