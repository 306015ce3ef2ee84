import type { AnnotationTask, Answers } from './types.js';

export interface ValidationResult {
  ok: boolean;
  field?: string;
  message?: string;
}

const OK: ValidationResult = { ok: true };

function fail(field: string, message: string): ValidationResult {
  return { ok: false, field, message };
}

/**
 * Client-side mirror of the server's submission rules: every displayed
 * question answered, yes/no answers literal, Likert answers integers 1-5,
 * and nothing answered that was not asked.
 */
export function validateAnswers(task: AnnotationTask, answers: Answers): ValidationResult {
  for (const question of task.questions) {
    const value = answers[question.id];
    if (value === undefined) {
      return fail(question.id, `${question.text} is not answered`);
    }
    if (question.type === 'yesno') {
      if (value !== 'yes' && value !== 'no') {
        return fail(question.id, `${question.id} must be 'yes' or 'no'`);
      }
    } else {
      if (typeof value !== 'number' || !Number.isInteger(value) || value < 1 || value > 5) {
        return fail(question.id, `${question.id} must be an integer from 1 to 5`);
      }
    }
  }
  const asked = new Set(task.questions.map((q) => q.id));
  for (const key of Object.keys(answers)) {
    if (!asked.has(key)) {
      return fail(key, `${key} is not a question of this task`);
    }
  }
  return OK;
}

/** True once every question has some provisional answer (enables submit). */
export function isComplete(task: AnnotationTask, answers: Answers): boolean {
  return task.questions.every((q) => answers[q.id] !== undefined);
}
