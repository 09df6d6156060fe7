import { encodeRle, decodeRle } from './rle.js';
import { RleMap } from './types.js';

interface CellPatch {
    index: number;
    previous: number;
}

// Editable per-pixel preset assignment layer.  Edits snap to whole pixels
// of the original image resolution; every mutating operation that changes
// at least one pixel pushes one undo entry.

export class MapPainter {
    readonly width: number;
    readonly height: number;
    readonly K: number;
    private cells: Int32Array;
    private undoStack: CellPatch[][] = [];

    constructor(width: number, height: number, K: number, initial?: Int32Array) {
        if (width < 1 || height < 1) {
            throw new Error(`bad map size ${width}x${height}`);
        }
        if (K < 1) {
            throw new Error(`bad preset count ${K}`);
        }
        this.width = width;
        this.height = height;
        this.K = K;
        if (initial !== undefined) {
            if (initial.length !== width * height) {
                throw new Error('initial cells do not match the map size');
            }
            this.cells = Int32Array.from(initial);
        } else {
            this.cells = new Int32Array(width * height);
        }
    }

    static fromRle(map: RleMap): MapPainter {
        return new MapPainter(map.width, map.height, map.K, decodeRle(map));
    }

    get(x: number, y: number): number {
        this.checkBounds(x, y);
        return this.cells[y * this.width + x];
    }

    assignments(): Int32Array {
        return Int32Array.from(this.cells);
    }

    exportRle(): RleMap {
        return encodeRle(this.cells, this.width, this.height, this.K);
    }

    get canUndo(): boolean {
        return this.undoStack.length > 0;
    }

    undo(): boolean {
        const patches = this.undoStack.pop();
        if (patches === undefined) return false;
        // patches were recorded forward; replaying previous values in
        // reverse restores the exact prior state
        for (let i = patches.length - 1; i >= 0; i--) {
            this.cells[patches[i].index] = patches[i].previous;
        }
        return true;
    }

    // Circular brush centered on a pixel; covers every pixel whose center
    // lies within `radius` of the center pixel.  Radius 0 paints exactly
    // one pixel.
    paintBrush(cx: number, cy: number, radius: number, preset: number): number {
        this.checkPreset(preset);
        const x0 = Math.round(cx);
        const y0 = Math.round(cy);
        const r = Math.max(0, radius);
        const patches: CellPatch[] = [];
        const yMin = Math.max(0, Math.floor(y0 - r));
        const yMax = Math.min(this.height - 1, Math.ceil(y0 + r));
        const xMin = Math.max(0, Math.floor(x0 - r));
        const xMax = Math.min(this.width - 1, Math.ceil(x0 + r));
        for (let y = yMin; y <= yMax; y++) {
            for (let x = xMin; x <= xMax; x++) {
                const dx = x - x0;
                const dy = y - y0;
                if (dx * dx + dy * dy > r * r) continue;
                this.setCell(y * this.width + x, preset, patches);
            }
        }
        return this.commit(patches);
    }

    // 4-connected flood fill of the region sharing the clicked pixel's
    // current preset.
    floodFill(x: number, y: number, preset: number): number {
        this.checkBounds(x, y);
        this.checkPreset(preset);
        const source = this.cells[y * this.width + x];
        if (source === preset) return 0;
        const patches: CellPatch[] = [];
        const stack: number[] = [y * this.width + x];
        while (stack.length > 0) {
            const idx = stack.pop()!;
            if (this.cells[idx] !== source) continue;
            this.setCell(idx, preset, patches);
            const px = idx % this.width;
            if (px > 0) stack.push(idx - 1);
            if (px < this.width - 1) stack.push(idx + 1);
            if (idx >= this.width) stack.push(idx - this.width);
            if (idx < this.cells.length - this.width) stack.push(idx + this.width);
        }
        return this.commit(patches);
    }

    fillAll(preset: number): number {
        this.checkPreset(preset);
        const patches: CellPatch[] = [];
        for (let i = 0; i < this.cells.length; i++) {
            this.setCell(i, preset, patches);
        }
        return this.commit(patches);
    }

    // Replace the whole layer (e.g. re-importing an exported map) as a
    // single undoable operation.
    loadRle(map: RleMap): number {
        if (map.width !== this.width || map.height !== this.height) {
            throw new Error(
                `imported map is ${map.width}x${map.height}, layer is ${this.width}x${this.height}`
            );
        }
        const incoming = decodeRle(map);
        const patches: CellPatch[] = [];
        for (let i = 0; i < this.cells.length; i++) {
            this.setCell(i, incoming[i], patches);
        }
        return this.commit(patches);
    }

    private setCell(index: number, preset: number, patches: CellPatch[]): void {
        const previous = this.cells[index];
        if (previous === preset) return;
        patches.push({ index, previous });
        this.cells[index] = preset;
    }

    private commit(patches: CellPatch[]): number {
        if (patches.length > 0) {
            this.undoStack.push(patches);
        }
        return patches.length;
    }

    private checkBounds(x: number, y: number): void {
        if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
            throw new Error(`pixel (${x}, ${y}) outside ${this.width}x${this.height}`);
        }
    }

    private checkPreset(preset: number): void {
        if (!Number.isInteger(preset) || preset < 0 || preset >= this.K) {
            throw new Error(`preset ${preset} out of range 0..${this.K - 1}`);
        }
    }
}
