import { RleMap } from './types.js';

// Row-major run-length coding of the adjustment map, matching the wire
// format of the /adjust endpoint: runs of [presetIndex, length] that
// must cover exactly width * height pixels.

export function encodeRle(
    cells: Int32Array,
    width: number,
    height: number,
    K: number
): RleMap {
    if (cells.length !== width * height) {
        throw new Error(`cell count ${cells.length} does not match ${width}x${height}`);
    }
    const runs: [number, number][] = [];
    let current = cells[0];
    let length = 0;
    for (let i = 0; i < cells.length; i++) {
        const v = cells[i];
        if (v < 0 || v >= K) {
            throw new Error(`preset index ${v} out of range 0..${K - 1}`);
        }
        if (v === current) {
            length++;
        } else {
            runs.push([current, length]);
            current = v;
            length = 1;
        }
    }
    runs.push([current, length]);
    return { width, height, K, runs };
}

export function decodeRle(map: RleMap): Int32Array {
    const { width, height, K, runs } = map;
    if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
        throw new Error('malformed rle map: bad dimensions');
    }
    if (!Array.isArray(runs) || runs.length === 0) {
        throw new Error('malformed rle map: no runs');
    }
    const cells = new Int32Array(width * height);
    let pos = 0;
    for (const run of runs) {
        if (!Array.isArray(run) || run.length !== 2) {
            throw new Error('malformed rle map: run is not an [index, length] pair');
        }
        const [index, length] = run;
        if (!Number.isInteger(length) || length < 1) {
            throw new Error(`malformed rle map: run length ${length}`);
        }
        if (!Number.isInteger(index) || index < 0 || index >= K) {
            throw new Error(`preset index ${index} out of range 0..${K - 1}`);
        }
        if (pos + length > cells.length) {
            throw new Error('rle runs overflow the map');
        }
        cells.fill(index, pos, pos + length);
        pos += length;
    }
    if (pos !== cells.length) {
        throw new Error(`rle runs cover ${pos} of ${cells.length} pixels`);
    }
    return cells;
}
