// Wire types for the annotation API. These mirror the server's JSON
// responses; the server never includes system identity in any of them.

export type TaskKind = 'quality_review' | 'likert_eval';

export interface Question {
  id: string;
  text: string;
  type: 'yesno' | 'likert';
}

export interface AnnotationTask {
  task_id: string;
  kind: TaskKind;
  payload: Record<string, string>;
  questions: Question[];
}

export type AnswerValue = 'yes' | 'no' | number;
export type Answers = Record<string, AnswerValue>;

export interface ItemStub {
  task_id: string;
  kind: TaskKind;
}

export interface NextResponse {
  done: boolean;
  task?: AnnotationTask;
}

export interface SubmitResponse {
  ok: boolean;
  replaced: boolean;
}

export interface DimensionStats {
  mean: number | null;
  std: number | null;
  count: number;
}

export interface QualityReport {
  n_labels: number;
  n_items: number;
  annotators_per_item: number;
  yes_percent: Record<string, number>;
  both_unique_and_correct_percent: number;
}

export interface LikertReport {
  n_labels: number;
  n_items: number;
  annotators_per_item: number;
  per_system: Record<string, Record<string, DimensionStats>>;
}

export interface Report {
  quality_review?: QualityReport;
  likert?: LikertReport;
}
