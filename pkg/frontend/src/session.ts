import { AdjustResponse, UserMapPayload } from './types.js';

export type AdjustFn = (
    imageB64: string,
    userMap?: UserMapPayload
) => Promise<AdjustResponse>;

interface PendingRequest {
    imageB64: string;
    userMap?: UserMapPayload;
    resolvers: Array<(r: AdjustResponse) => void>;
    rejecters: Array<(e: unknown) => void>;
}

// One in-flight adjust request at a time.  Requests made while busy are
// queued, and a newer queued request replaces the older one (the older
// caller is attached to the newer request, since only the latest edit
// state matters).

export class AdjustSession {
    private adjustFn: AdjustFn;
    private inFlight = false;
    private pending: PendingRequest | null = null;

    constructor(adjustFn: AdjustFn) {
        this.adjustFn = adjustFn;
    }

    get busy(): boolean {
        return this.inFlight;
    }

    submit(imageB64: string, userMap?: UserMapPayload): Promise<AdjustResponse> {
        return new Promise((resolve, reject) => {
            if (this.inFlight) {
                if (this.pending === null) {
                    this.pending = { imageB64, userMap, resolvers: [], rejecters: [] };
                } else {
                    // coalesce: keep earlier callers, replace the payload
                    this.pending.imageB64 = imageB64;
                    this.pending.userMap = userMap;
                }
                this.pending.resolvers.push(resolve);
                this.pending.rejecters.push(reject);
                return;
            }
            this.run({ imageB64, userMap, resolvers: [resolve], rejecters: [reject] });
        });
    }

    private async run(request: PendingRequest): Promise<void> {
        this.inFlight = true;
        let response: AdjustResponse | undefined;
        let failure: unknown;
        let failed = false;
        try {
            response = await this.adjustFn(request.imageB64, request.userMap);
        } catch (err) {
            failure = err;
            failed = true;
        }
        // settle state first so callers observing their promise see an
        // idle session, then start the queued request if one piled up
        this.inFlight = false;
        const next = this.pending;
        this.pending = null;
        if (failed) {
            for (const reject of request.rejecters) reject(failure);
        } else {
            for (const resolve of request.resolvers) resolve(response as AdjustResponse);
        }
        if (next !== null) {
            void this.run(next);
        }
    }
}
