// Preset overlay colors, in the same order as the indexed-PNG palette the
// service writes, so the painted overlay and the /presets swatch strips
// agree about which color means which preset.

export const PRESET_PALETTE: [number, number, number][] = [
    [230, 60, 60],
    [60, 120, 230],
    [60, 200, 100],
    [240, 190, 50],
    [170, 80, 220],
    [70, 210, 210],
    [240, 130, 40],
    [140, 140, 140],
];

export function colorForPreset(preset: number): [number, number, number] {
    return PRESET_PALETTE[preset % PRESET_PALETTE.length];
}

export function cssColorForPreset(preset: number): string {
    const [r, g, b] = colorForPreset(preset);
    return `rgb(${r}, ${g}, ${b})`;
}
