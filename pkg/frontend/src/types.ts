export interface QueueItem {
    cell_id: string;
    question: string;
    gold_answer: unknown;
    answer_type: string;
    error_class: number;
    error_class_name: string;
    response: string;
    is_refusal: boolean;
    refusal_matches: string[];
    pipeline: string;
    backend: string;
    rev: number;
}

export interface ClassInfo {
    id: number;
    name: string;
    definition: string;
    prompt_definition: string;
}

export interface ProgressGroup {
    labeled: number;
    total: number;
}

export interface Progress {
    labeled: number;
    total: number;
    groups: Record<string, ProgressGroup>;
}

/** The three review verdicts an annotator can pick. */
export type Outcome = 'correct' | 'incorrect_wrong_class' | 'incorrect_right_class';

export interface LabelSubmission {
    cell_id: string;
    human_examination: number;
    annotator: string;
    sublabel?: string | null;
    refusal_override?: boolean | null;
    expected_rev?: number | null;
}

export interface LabelResult {
    cell_id: string;
    rev: number;
    /** Server-computed outcome; the console never derives this itself. */
    outcome: string | null;
}
