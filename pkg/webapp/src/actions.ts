// Bridges user intents to the service; pessimistic commits (the SQL panel only
// changes when the server confirms) with at most one in-flight mutation.

import { ApiClient, ApiError } from "./api.js";
import { AppState, Store, afterResponse, projectSession, withDraft, withStepError } from "./state.js";

export class Actions {
  constructor(private client: ApiClient, readonly store: Store) {}

  private begin(): boolean {
    if (this.store.state.busy) {
      return false;
    }
    this.store.update((s) => ({ ...s, busy: true, globalError: null }));
    return true;
  }

  private fail(message: string): void {
    this.store.update((s) => ({ ...s, busy: false, globalError: message }));
  }

  async createSession(schemaId: string): Promise<void> {
    if (!this.begin()) return;
    try {
      const view = await this.client.createSession(schemaId);
      this.store.set(projectSession(view));
    } catch (err) {
      this.fail(err instanceof Error ? err.message : String(err));
    }
  }

  async loadSession(sessionId: string): Promise<void> {
    if (!this.begin()) return;
    try {
      const view = await this.client.getSession(sessionId);
      this.store.set(projectSession(view));
    } catch (err) {
      this.fail(err instanceof Error ? err.message : String(err));
    }
  }

  async ask(text: string): Promise<void> {
    const { sessionId } = this.store.state;
    if (!sessionId || !this.begin()) return;
    try {
      const view = await this.client.ask(sessionId, text);
      this.store.set(projectSession(view));
    } catch (err) {
      this.fail(err instanceof Error ? err.message : String(err));
    }
  }

  setDraft(index: number, draft: string): void {
    this.store.update((s) => withDraft(s, index, draft));
  }

  async submitEdit(index: number): Promise<void> {
    const state = this.store.state;
    const step = state.steps.find((s) => s.index === index);
    if (!state.sessionId || !step) return;
    if (!step.dirty || step.draft === null) {
      // unchanged submit is a no-op: no round trip, no state change
      return;
    }
    if (!this.begin()) return;
    try {
      const view = await this.client.editStep(state.sessionId, index, step.draft);
      this.store.set(afterResponse(this.store.state, view, index));
    } catch (err) {
      // restore the server text, surface the message on the step
      const message = err instanceof ApiError ? err.message : String(err);
      this.store.update((s) => withStepError(s, index, message));
    }
  }

  async addStep(position: number, text: string): Promise<void> {
    const { sessionId } = this.store.state;
    if (!sessionId || !this.begin()) return;
    try {
      const view = await this.client.insertStep(sessionId, position, text);
      this.store.set(projectSession(view));
    } catch (err) {
      this.fail(err instanceof ApiError ? err.message : String(err));
    }
  }

  async removeStep(index: number): Promise<void> {
    const { sessionId } = this.store.state;
    if (!sessionId || !this.begin()) return;
    try {
      const view = await this.client.deleteStep(sessionId, index);
      this.store.set(projectSession(view));
    } catch (err) {
      this.fail(err instanceof ApiError ? err.message : String(err));
    }
  }
}
