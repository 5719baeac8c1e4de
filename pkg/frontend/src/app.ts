import { ApiClient, StaleRevisionError } from './api.js';
import { OUTCOME_LABELS, buildSubmission, canSubmit, initialRefusalToggle, outcomeForKey } from './logic.js';
import type { ClassInfo, Outcome, QueueItem } from './types.js';

const OUTCOME_ORDER: Outcome[] = ['incorrect_right_class', 'incorrect_wrong_class', 'correct'];

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node as T;
}

export class ConsoleApp {
    private queue: QueueItem[] = [];
    private classes: ClassInfo[] = [];
    private picked: Outcome | null = null;
    private refusalToggle = false;
    private readonly annotator: string;

    constructor(private readonly api: ApiClient) {
        this.annotator = localStorage.getItem('annotator') ?? 'reviewer';
    }

    async start(): Promise<void> {
        this.classes = await this.api.fetchClasses();
        document.addEventListener('keydown', (ev) => this.onKey(ev));
        el('submit').addEventListener('click', () => void this.submit());
        el('refusal-toggle').addEventListener('change', () => {
            this.refusalToggle = (el<HTMLInputElement>('refusal-toggle')).checked;
        });
        for (const outcome of OUTCOME_ORDER) {
            el(`btn-${outcome}`).addEventListener('click', () => this.pick(outcome));
        }
        await this.refresh();
    }

    private get current(): QueueItem | undefined {
        return this.queue[0];
    }

    private async refresh(): Promise<void> {
        this.queue = await this.api.fetchQueue();
        this.picked = null;
        this.render();
        await this.renderProgress();
    }

    private pick(outcome: Outcome): void {
        if (!this.current) {
            return;
        }
        this.picked = outcome;
        this.render();
    }

    private onKey(ev: KeyboardEvent): void {
        if (ev.key === 'r' && this.current) {
            this.refusalToggle = !this.refusalToggle;
            this.render();
            return;
        }
        if (ev.key === 'Enter') {
            void this.submit();
            return;
        }
        const outcome = outcomeForKey(ev.key);
        if (outcome) {
            this.pick(outcome);
        }
    }

    private async submit(): Promise<void> {
        const item = this.current;
        if (!item || !canSubmit(this.picked)) {
            return;
        }
        const submission = buildSubmission(item, this.picked as Outcome, this.refusalToggle, this.annotator);
        try {
            const result = await this.api.submitLabel(submission);
            el('status').textContent = `${result.cell_id}: recorded as ${result.outcome}`;
        } catch (err) {
            if (err instanceof StaleRevisionError) {
                el('status').textContent = 'cell was relabeled elsewhere; refetching';
            } else {
                el('status').textContent = String(err);
                return;
            }
        }
        await this.refresh();
    }

    private render(): void {
        const item = this.current;
        if (!item) {
            el('card').hidden = true;
            el('done').hidden = false;
            return;
        }
        el('card').hidden = false;
        el('done').hidden = true;
        if (this.picked === null) {
            this.refusalToggle = initialRefusalToggle(item);
        }
        el('question').textContent = item.question;
        el('gold').textContent = `${item.answer_type}: ${JSON.stringify(item.gold_answer)}`;
        el('response').textContent = item.response;
        el('meta').textContent = `${item.cell_id}  ${item.pipeline}  ${item.backend}`;
        const cls = this.classes.find((c) => c.id === item.error_class);
        el('target-class').textContent = cls
            ? `E${cls.id} ${cls.name}: ${cls.definition}`
            : `E${item.error_class} ${item.error_class_name}`;
        const toggle = el<HTMLInputElement>('refusal-toggle');
        toggle.checked = this.refusalToggle;
        el('refusal-hint').textContent = item.is_refusal
            ? `detector flagged: ${item.refusal_matches.join(', ')}`
            : 'detector: no refusal';
        for (const outcome of OUTCOME_ORDER) {
            const btn = el<HTMLButtonElement>(`btn-${outcome}`);
            btn.textContent = OUTCOME_LABELS[outcome];
            btn.classList.toggle('picked', this.picked === outcome);
        }
        (el<HTMLButtonElement>('submit')).disabled = !canSubmit(this.picked);
    }

    private async renderProgress(): Promise<void> {
        const progress = await this.api.fetchProgress();
        el('progress').textContent = `${progress.labeled} / ${progress.total} labeled`;
        const parts = Object.entries(progress.groups)
            .sort(([a], [b]) => a.localeCompare(b))
            .map(([group, g]) => `${group} ${g.labeled}/${g.total}`);
        el('progress-groups').textContent = parts.join('   ');
    }
}

if (typeof document !== 'undefined' && document.getElementById('card')) {
    void new ConsoleApp(new ApiClient()).start();
}
