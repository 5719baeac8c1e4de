import type { ClassInfo, LabelResult, LabelSubmission, Progress, QueueItem } from './types.js';

export class StaleRevisionError extends Error {
    constructor(detail: string) {
        super(detail);
        this.name = 'StaleRevisionError';
    }
}

export class ApiClient {
    constructor(private readonly baseUrl: string = '') {}

    async fetchQueue(limit = 25): Promise<QueueItem[]> {
        const resp = await fetch(`${this.baseUrl}/api/queue?limit=${limit}`);
        if (!resp.ok) {
            throw new Error(`queue fetch failed: ${resp.status}`);
        }
        const data = (await resp.json()) as { items: QueueItem[] };
        return data.items;
    }

    async fetchProgress(): Promise<Progress> {
        const resp = await fetch(`${this.baseUrl}/api/progress`);
        if (!resp.ok) {
            throw new Error(`progress fetch failed: ${resp.status}`);
        }
        return (await resp.json()) as Progress;
    }

    async fetchClasses(): Promise<ClassInfo[]> {
        const resp = await fetch(`${this.baseUrl}/api/classes`);
        if (!resp.ok) {
            throw new Error(`classes fetch failed: ${resp.status}`);
        }
        const data = (await resp.json()) as { classes: ClassInfo[] };
        return data.classes;
    }

    async submitLabel(submission: LabelSubmission): Promise<LabelResult> {
        const resp = await fetch(`${this.baseUrl}/api/labels`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(submission)
        });
        if (resp.status === 409) {
            const body = (await resp.json()) as { detail?: string };
            throw new StaleRevisionError(body.detail ?? 'stale revision');
        }
        if (!resp.ok) {
            throw new Error(`label submit failed: ${resp.status}`);
        }
        return (await resp.json()) as LabelResult;
    }
}
