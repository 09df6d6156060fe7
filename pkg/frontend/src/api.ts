import { AdjustResponse, HealthInfo, PresetSwatch, UserMapPayload } from './types.js';

export class ServiceError extends Error {
    constructor(public code: string, message: string) {
        super(message);
        this.name = 'ServiceError';
    }
}

export class ServiceUnreachableError extends Error {
    constructor(message: string) {
        super(message);
        this.name = 'ServiceUnreachableError';
    }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    private baseUrl: string;
    private fetchFn: FetchLike;

    constructor(baseUrl: string, fetchFn?: FetchLike) {
        this.baseUrl = baseUrl.replace(/\/+$/, '');
        this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    }

    async health(): Promise<HealthInfo> {
        const response = await this.request('/health');
        return (await response.json()) as HealthInfo;
    }

    async presets(): Promise<PresetSwatch[]> {
        const response = await this.request('/presets');
        const body = (await response.json()) as { presets: PresetSwatch[] };
        return body.presets;
    }

    async adjust(imageB64: string, userMap?: UserMapPayload): Promise<AdjustResponse> {
        const body: { image: string; user_map?: UserMapPayload } = { image: imageB64 };
        if (userMap !== undefined) {
            body.user_map = userMap;
        }
        const response = await this.request('/adjust', {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(body),
        });
        return (await response.json()) as AdjustResponse;
    }

    private async request(path: string, init?: RequestInit): Promise<Response> {
        let response: Response;
        try {
            response = await this.fetchFn(this.baseUrl + path, init);
        } catch (err) {
            throw new ServiceUnreachableError(`service unreachable: ${String(err)}`);
        }
        if (!response.ok) {
            let code = `http_${response.status}`;
            let message = response.statusText;
            try {
                const detail = (await response.json()).detail;
                if (detail && typeof detail === 'object' && 'code' in detail) {
                    code = detail.code;
                    message = detail.message;
                }
            } catch {
                // keep the generic code when the body is not our envelope
            }
            throw new ServiceError(code, message);
        }
        return response;
    }
}
