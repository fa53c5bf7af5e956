// UI state: a pure projection of the latest service response plus any
// unsubmitted local drafts. Reloading the page and re-fetching the session
// reproduces exactly the same state.

import type { SessionView, SpanDto } from "./api.js";

export interface StepView {
  index: number;
  text: string; // server text, shown verbatim until edited
  draft: string | null; // unsubmitted local edit
  dirty: boolean;
  role: string;
  kind: string | null;
  spans: SpanDto[];
  verdict: string | null; // direct | generated | noop from the last submit
  error: string | null;
}

export interface AppState {
  sessionId: string | null;
  schemaId: string | null;
  question: string | null;
  sql: string | null;
  steps: StepView[];
  busy: boolean; // one in-flight mutation at a time
  globalError: string | null;
}

export function initialState(): AppState {
  return {
    sessionId: null,
    schemaId: null,
    question: null,
    sql: null,
    steps: [],
    busy: false,
    globalError: null,
  };
}

export function projectSession(view: SessionView): AppState {
  const steps: StepView[] = (view.explanation?.steps ?? []).map((step) => ({
    index: step.index,
    text: step.text,
    draft: null,
    dirty: false,
    role: step.role,
    kind: step.clause_kind,
    spans: step.spans,
    verdict: null,
    error: null,
  }));
  return {
    sessionId: view.id,
    schemaId: view.schema_id,
    question: view.question,
    sql: view.sql,
    steps,
    busy: false,
    globalError: null,
  };
}

export function withDraft(state: AppState, index: number, draft: string): AppState {
  const steps = state.steps.map((step) =>
    step.index === index
      ? { ...step, draft, dirty: draft.trim() !== step.text.trim(), error: null }
      : step,
  );
  return { ...state, steps };
}

export function withStepError(state: AppState, index: number, message: string): AppState {
  const steps = state.steps.map((step) =>
    step.index === index ? { ...step, error: message } : step,
  );
  return { ...state, steps, busy: false };
}

export function afterResponse(state: AppState, view: SessionView,
                              editedIndex?: number): AppState {
  const next = projectSession(view);
  if (editedIndex !== undefined && view.edit_path) {
    next.steps = next.steps.map((step) =>
      step.index === editedIndex ? { ...step, verdict: view.edit_path ?? null } : step,
    );
  }
  return next;
}

export class Store {
  state: AppState;
  private listeners: Array<(state: AppState) => void> = [];

  constructor(state?: AppState) {
    this.state = state ?? initialState();
  }

  subscribe(listener: (state: AppState) => void): void {
    this.listeners.push(listener);
  }

  set(state: AppState): void {
    this.state = state;
    for (const listener of this.listeners) {
      listener(state);
    }
  }

  update(fn: (state: AppState) => AppState): void {
    this.set(fn(this.state));
  }
}
