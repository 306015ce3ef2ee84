import { describe, expect, it } from 'vitest';
import { reportRows } from '../src/report.js';

describe('reportRows', () => {
  it('formats quality percentages and the conjunction row', () => {
    const sections = reportRows({
      quality_review: {
        n_labels: 100,
        n_items: 100,
        annotators_per_item: 1.0,
        yes_percent: { answerable: 94.0, unique: 90.0, correct: 83.0 },
        both_unique_and_correct_percent: 75.0,
      },
    });
    expect(sections).toHaveLength(1);
    const rows = sections[0]!.rows;
    expect(rows).toContainEqual({ label: 'answerable (yes)', value: '94.0%' });
    expect(rows).toContainEqual({ label: 'both unique and correct', value: '75.0%' });
  });

  it('formats per-system likert means with std', () => {
    const sections = reportRows({
      likert: {
        n_labels: 792,
        n_items: 180,
        annotators_per_item: 4.4,
        per_system: {
          human: { faithfulness: { mean: 4.34, std: 1.0, count: 132 } },
        },
      },
    });
    const rows = sections[0]!.rows;
    expect(rows).toContainEqual({ label: 'annotators per item', value: '4.4' });
    expect(rows).toContainEqual({ label: 'human / faithfulness', value: '4.34 (1.00)' });
  });

  it('handles an empty report', () => {
    expect(reportRows({})).toEqual([]);
  });
});
