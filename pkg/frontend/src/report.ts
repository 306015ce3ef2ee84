import type { Report } from './types.js';

export interface ReportRow {
  label: string;
  value: string;
}

function pct(value: number): string {
  return `${value.toFixed(1)}%`;
}

/** Flatten the report JSON into display rows, one table per study kind. */
export function reportRows(report: Report): { title: string; rows: ReportRow[] }[] {
  const sections: { title: string; rows: ReportRow[] }[] = [];

  const quality = report.quality_review;
  if (quality) {
    const rows: ReportRow[] = [
      { label: 'labels', value: String(quality.n_labels) },
      { label: 'items', value: String(quality.n_items) },
      { label: 'annotators per item', value: quality.annotators_per_item.toFixed(1) },
    ];
    for (const [question, value] of Object.entries(quality.yes_percent)) {
      rows.push({ label: `${question} (yes)`, value: pct(value) });
    }
    rows.push({
      label: 'both unique and correct',
      value: pct(quality.both_unique_and_correct_percent),
    });
    sections.push({ title: 'Quality review', rows });
  }

  const likert = report.likert;
  if (likert) {
    const rows: ReportRow[] = [
      { label: 'labels', value: String(likert.n_labels) },
      { label: 'items', value: String(likert.n_items) },
      { label: 'annotators per item', value: likert.annotators_per_item.toFixed(1) },
    ];
    for (const [system, dims] of Object.entries(likert.per_system)) {
      for (const [dim, stats] of Object.entries(dims)) {
        const mean = stats.mean === null ? '-' : stats.mean.toFixed(2);
        const std = stats.std === null ? '-' : stats.std.toFixed(2);
        rows.push({ label: `${system} / ${dim}`, value: `${mean} (${std})` });
      }
    }
    sections.push({ title: 'Likert evaluation', rows });
  }

  return sections;
}
