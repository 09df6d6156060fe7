export interface RleMap {
    width: number;
    height: number;
    K: number;
    runs: [number, number][];
}

export interface UserMapPayload {
    png?: string;
    rle?: RleMap;
}

export interface HealthInfo {
    status: string;
    k: number;
    variant: string;
    context_dim: number;
}

export interface PresetSwatch {
    index: number;
    before: string;
    after: string;
}

export interface AdjustResponse {
    adjusted: string;
    map: {
        png: string;
        rle: RleMap;
    };
}
