import { ApiClient, ServiceUnreachableError } from './api.js';
import { MapPainter } from './painter.js';
import { AdjustSession } from './session.js';
import { renderMapOverlay, wipeComposite } from './overlay.js';
import { cssColorForPreset } from './palette.js';
import { AdjustResponse, RleMap } from './types.js';

const client = new ApiClient(window.location.origin.replace(/:\d+$/, ':8000'));
const session = new AdjustSession((image, userMap) => client.adjust(image, userMap));

const fileInput = document.getElementById('file') as HTMLInputElement;
const importInput = document.getElementById('import-map') as HTMLInputElement;
const exportButton = document.getElementById('export-map') as HTMLButtonElement;
const undoButton = document.getElementById('undo') as HTMLButtonElement;
const radiusInput = document.getElementById('radius') as HTMLInputElement;
const wipeInput = document.getElementById('wipe') as HTMLInputElement;
const overlayToggle = document.getElementById('show-overlay') as HTMLInputElement;
const toolSelect = document.getElementById('tool') as HTMLSelectElement;
const paletteBar = document.getElementById('palette') as HTMLDivElement;
const banner = document.getElementById('banner') as HTMLDivElement;
const viewCanvas = document.getElementById('view') as HTMLCanvasElement;
const overlayCanvas = document.getElementById('overlay') as HTMLCanvasElement;

let imageB64: string | null = null;
let beforePixels: Uint8ClampedArray | null = null;
let afterPixels: Uint8ClampedArray | null = null;
let painter: MapPainter | null = null;
let activePreset = 0;
let painting = false;

function showBanner(message: string): void {
    banner.textContent = message;
    banner.style.display = 'block';
}

function clearBanner(): void {
    banner.style.display = 'none';
}

async function decodeToPixels(b64Png: string): Promise<ImageData> {
    const img = new Image();
    img.src = 'data:image/png;base64,' + b64Png;
    await img.decode();
    const scratch = document.createElement('canvas');
    scratch.width = img.naturalWidth;
    scratch.height = img.naturalHeight;
    const ctx = scratch.getContext('2d')!;
    ctx.drawImage(img, 0, 0);
    return ctx.getImageData(0, 0, scratch.width, scratch.height);
}

function redraw(): void {
    if (beforePixels === null || afterPixels === null || painter === null) return;
    const { width, height } = painter;
    viewCanvas.width = width;
    viewCanvas.height = height;
    overlayCanvas.width = width;
    overlayCanvas.height = height;
    const fraction = Number(wipeInput.value) / 100;
    const composed = wipeComposite(beforePixels, afterPixels, width, height, fraction);
    viewCanvas.getContext('2d')!.putImageData(new ImageData(composed, width, height), 0, 0);

    const octx = overlayCanvas.getContext('2d')!;
    octx.clearRect(0, 0, width, height);
    if (overlayToggle.checked) {
        const rgba = renderMapOverlay(painter.assignments(), width, height);
        octx.putImageData(new ImageData(rgba, width, height), 0, 0);
    }
}

async function applyResponse(response: AdjustResponse): Promise<void> {
    afterPixels = (await decodeToPixels(response.adjusted)).data;
    redraw();
}

function submitCurrentMap(): void {
    if (imageB64 === null || painter === null) return;
    session
        .submit(imageB64, { rle: painter.exportRle() })
        .then((response) => {
            clearBanner();
            return applyResponse(response);
        })
        .catch((err) => {
            if (err instanceof ServiceUnreachableError) {
                showBanner('service unreachable; your edits are kept locally');
            } else {
                showBanner(String(err));
            }
        });
}

function buildPalette(k: number): void {
    paletteBar.innerHTML = '';
    for (let preset = 0; preset < k; preset++) {
        const button = document.createElement('button');
        button.style.background = cssColorForPreset(preset);
        button.textContent = String(preset);
        button.onclick = () => {
            activePreset = preset;
        };
        paletteBar.appendChild(button);
    }
}

function canvasPixel(event: PointerEvent): [number, number] | null {
    if (painter === null) return null;
    const rect = overlayCanvas.getBoundingClientRect();
    const x = Math.floor(((event.clientX - rect.left) / rect.width) * painter.width);
    const y = Math.floor(((event.clientY - rect.top) / rect.height) * painter.height);
    if (x < 0 || y < 0 || x >= painter.width || y >= painter.height) return null;
    return [x, y];
}

function applyTool(x: number, y: number): void {
    if (painter === null) return;
    const changed =
        toolSelect.value === 'fill'
            ? painter.floodFill(x, y, activePreset)
            : painter.paintBrush(x, y, Number(radiusInput.value), activePreset);
    if (changed > 0) {
        redraw();
        submitCurrentMap();
    }
}

overlayCanvas.addEventListener('pointerdown', (event) => {
    const p = canvasPixel(event);
    if (p === null) return;
    painting = toolSelect.value !== 'fill';
    applyTool(p[0], p[1]);
});
overlayCanvas.addEventListener('pointermove', (event) => {
    if (!painting) return;
    const p = canvasPixel(event);
    if (p !== null && painter !== null) {
        painter.paintBrush(p[0], p[1], Number(radiusInput.value), activePreset);
        redraw();
    }
});
window.addEventListener('pointerup', () => {
    if (painting) {
        painting = false;
        submitCurrentMap();
    }
});

undoButton.onclick = () => {
    if (painter !== null && painter.undo()) {
        redraw();
        submitCurrentMap();
    }
};

wipeInput.oninput = redraw;
overlayToggle.onchange = redraw;

exportButton.onclick = () => {
    if (painter === null) return;
    const blob = new Blob([JSON.stringify(painter.exportRle())], {
        type: 'application/json',
    });
    const link = document.createElement('a');
    link.href = URL.createObjectURL(blob);
    link.download = 'adjustment-map.json';
    link.click();
    URL.revokeObjectURL(link.href);
};

importInput.onchange = async () => {
    const file = importInput.files?.[0];
    if (file === undefined || painter === null) return;
    try {
        const map = JSON.parse(await file.text()) as RleMap;
        painter.loadRle(map);
        redraw();
        submitCurrentMap();
    } catch (err) {
        showBanner(`could not import map: ${String(err)}`);
    }
};

fileInput.onchange = async () => {
    const file = fileInput.files?.[0];
    if (file === undefined) return;
    const buf = new Uint8Array(await file.arrayBuffer());
    let binary = '';
    for (const byte of buf) binary += String.fromCharCode(byte);
    imageB64 = btoa(binary);
    beforePixels = (await decodeToPixels(imageB64)).data;
    try {
        const response = await session.submit(imageB64);
        painter = MapPainter.fromRle(response.map.rle);
        clearBanner();
        await applyResponse(response);
    } catch (err) {
        if (err instanceof ServiceUnreachableError) {
            showBanner('service unreachable; try again once it is up');
        } else {
            showBanner(String(err));
        }
    }
};

client
    .health()
    .then((info) => buildPalette(info.k))
    .catch(() => showBanner('service unreachable; start it and reload'));
