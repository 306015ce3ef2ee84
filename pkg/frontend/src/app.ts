import { ApiClient, ApiError } from './api.js';
import { reportRows } from './report.js';
import type { AnnotationTask, Answers } from './types.js';
import { isComplete, validateAnswers } from './validation.js';

const LIKERT_VALUES = [1, 2, 3, 4, 5];

class AnnotationApp {
  private client: ApiClient | null = null;
  private annotatorId = '';
  private task: AnnotationTask | null = null;
  private answers: Answers = {};
  private labeled = 0;

  constructor(private root: Document) {
    this.el('start-button').addEventListener('click', () => void this.start());
    this.el('submit-button').addEventListener('click', () => void this.submit());
    this.el('report-button').addEventListener('click', () => void this.showReport());
    this.el('back-button').addEventListener('click', () => this.show('task-panel'));
  }

  private el(id: string): HTMLElement {
    const element = this.root.getElementById(id);
    if (!element) {
      throw new Error(`missing element #${id}`);
    }
    return element;
  }

  private show(panel: string): void {
    for (const id of ['login-panel', 'task-panel', 'done-panel', 'report-panel']) {
      this.el(id).hidden = id !== panel;
    }
  }

  private setStatus(text: string, isError = false): void {
    const status = this.el('status');
    status.textContent = text;
    status.className = isError ? 'status error' : 'status';
  }

  private async start(): Promise<void> {
    const annotator = (this.el('annotator-input') as HTMLInputElement).value.trim();
    const token = (this.el('token-input') as HTMLInputElement).value.trim();
    if (!annotator) {
      this.setStatus('Enter an annotator id first.', true);
      return;
    }
    this.annotatorId = annotator;
    this.client = new ApiClient('', token || null);
    await this.loadNext();
  }

  private async loadNext(): Promise<void> {
    if (!this.client) return;
    try {
      const next = await this.client.next(this.annotatorId);
      if (next.done || !next.task) {
        this.show('done-panel');
        this.el('done-count').textContent = String(this.labeled);
        return;
      }
      this.task = next.task;
      this.answers = {};
      this.renderTask(next.task);
      this.show('task-panel');
      this.setStatus(`Annotating as ${this.annotatorId} (${this.labeled} submitted)`);
    } catch (err) {
      this.handleError(err);
    }
  }

  private renderTask(task: AnnotationTask): void {
    this.el('task-kind').textContent =
      task.kind === 'quality_review' ? 'Quality review' : 'Summary rating';
    const payload = this.el('payload');
    payload.replaceChildren();
    for (const [key, value] of Object.entries(task.payload)) {
      if (!value) continue;
      const block = this.root.createElement('div');
      block.className = 'payload-block';
      const heading = this.root.createElement('h3');
      heading.textContent = key.replace('_', ' ');
      const body = this.root.createElement('pre');
      body.textContent = value;
      block.append(heading, body);
      payload.append(block);
    }
    const questions = this.el('questions');
    questions.replaceChildren();
    for (const question of task.questions) {
      const row = this.root.createElement('fieldset');
      row.className = 'question';
      const legend = this.root.createElement('legend');
      legend.textContent = question.text;
      row.append(legend);
      const options: (string | number)[] =
        question.type === 'yesno' ? ['yes', 'no'] : LIKERT_VALUES;
      for (const option of options) {
        const label = this.root.createElement('label');
        const input = this.root.createElement('input');
        input.type = 'radio';
        input.name = question.id;
        input.value = String(option);
        input.addEventListener('change', () => {
          this.answers[question.id] = question.type === 'yesno' ? (option as 'yes' | 'no') : Number(option);
          this.refreshSubmit();
        });
        label.append(input, this.root.createTextNode(String(option)));
        row.append(label);
      }
      questions.append(row);
    }
    this.refreshSubmit();
  }

  private refreshSubmit(): void {
    const button = this.el('submit-button') as HTMLButtonElement;
    button.disabled = !(this.task && isComplete(this.task, this.answers));
  }

  private async submit(): Promise<void> {
    if (!this.client || !this.task) return;
    const verdict = validateAnswers(this.task, this.answers);
    if (!verdict.ok) {
      this.setStatus(verdict.message ?? 'Please answer every question.', true);
      return;
    }
    try {
      await this.client.submitLabel(this.task.task_id, this.annotatorId, this.answers);
      this.labeled += 1;
      await this.loadNext();
    } catch (err) {
      this.handleError(err);
    }
  }

  private async showReport(): Promise<void> {
    if (!this.client) return;
    try {
      const report = await this.client.report();
      const container = this.el('report-tables');
      container.replaceChildren();
      for (const section of reportRows(report)) {
        const heading = this.root.createElement('h3');
        heading.textContent = section.title;
        const table = this.root.createElement('table');
        for (const row of section.rows) {
          const tr = this.root.createElement('tr');
          const labelCell = this.root.createElement('td');
          labelCell.textContent = row.label;
          const valueCell = this.root.createElement('td');
          valueCell.textContent = row.value;
          tr.append(labelCell, valueCell);
          table.append(tr);
        }
        container.append(heading, table);
      }
      this.show('report-panel');
    } catch (err) {
      this.handleError(err);
    }
  }

  private handleError(err: unknown): void {
    if (err instanceof ApiError) {
      if (err.code === 'UNAUTHORIZED') {
        this.setStatus('Unauthorized: check the access token.', true);
        this.show('login-panel');
        return;
      }
      this.setStatus(`${err.code}: ${err.message}`, true);
      return;
    }
    this.setStatus(`Request failed: ${String(err)}`, true);
  }
}

new AnnotationApp(document);
