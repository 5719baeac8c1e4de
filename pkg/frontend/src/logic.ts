import type { LabelSubmission, Outcome, QueueItem } from './types.js';

export const OUTCOME_LABELS: Record<Outcome, string> = {
    incorrect_right_class: 'Incorrect, right class',
    incorrect_wrong_class: 'Incorrect, wrong class',
    correct: 'Correct'
};

/**
 * Map a picked verdict to the label the server expects. Only the
 * targeted success submits human_examination = 1; the other two are
 * human_examination = 0 with the verdict as sublabel. The refusal
 * toggle is sent as an override only when the reviewer changed it
 * from the detector's preset.
 */
export function buildSubmission(
    item: QueueItem,
    outcome: Outcome,
    refusalToggle: boolean,
    annotator: string
): LabelSubmission {
    const submission: LabelSubmission = {
        cell_id: item.cell_id,
        human_examination: outcome === 'incorrect_right_class' ? 1 : 0,
        annotator,
        expected_rev: item.rev
    };
    if (outcome !== 'incorrect_right_class') {
        submission.sublabel = outcome;
    }
    if (refusalToggle !== item.is_refusal) {
        submission.refusal_override = refusalToggle;
    }
    return submission;
}

/** Keyboard shortcuts: 1/2/3 pick a verdict, r flips the refusal toggle. */
export function outcomeForKey(key: string): Outcome | null {
    switch (key) {
        case '1':
            return 'incorrect_right_class';
        case '2':
            return 'incorrect_wrong_class';
        case '3':
            return 'correct';
        default:
            return null;
    }
}

export function canSubmit(outcome: Outcome | null): boolean {
    return outcome !== null;
}

/** The refusal toggle starts where the detector left it. */
export function initialRefusalToggle(item: QueueItem): boolean {
    return item.is_refusal;
}
