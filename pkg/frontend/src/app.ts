// Controller wiring: form input -> API -> state -> render. At most one
// request is in flight; the form is disabled while waiting.

import { ApiError, TrackingClient } from "./api";
import { renderApp } from "./render";
import {
  initialState,
  SessionState,
  withError,
  withOverride,
  withSession,
  withTurn,
} from "./state";

export interface AppElements {
  root: HTMLElement;
  form: HTMLFormElement;
  input: HTMLInputElement;
  submit: HTMLButtonElement;
}

export class App {
  state: SessionState = initialState();

  constructor(
    private readonly client: TrackingClient,
    private readonly els: AppElements,
  ) {
    els.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitQuery();
    });
  }

  async start(): Promise<void> {
    const id = await this.client.createSession();
    this.setState(withSession(this.state, id));
  }

  async submitQuery(): Promise<void> {
    const text = this.els.input.value.trim();
    if (!text || this.state.busy || this.state.sessionId === null) return;
    this.setState({ ...this.state, busy: true });
    try {
      const result = await this.client.track(this.state.sessionId, text);
      this.els.input.value = "";
      this.setState(withTurn(this.state, result));
    } catch (err) {
      this.setState(withError(this.state, describe(err)));
    }
  }

  async toggleDecision(index: number, keep: boolean): Promise<void> {
    if (this.state.busy || this.state.sessionId === null) return;
    this.setState({ ...this.state, busy: true });
    try {
      const result = await this.client.override(
        this.state.sessionId,
        index,
        keep,
      );
      this.setState(withOverride(this.state, result));
    } catch (err) {
      this.setState(withError(this.state, describe(err)));
    }
  }

  private setState(next: SessionState): void {
    this.state = next;
    this.els.input.disabled = next.busy;
    this.els.submit.disabled = next.busy;
    renderApp(this.els.root, next, {
      onToggle: (index, keep) => void this.toggleDecision(index, keep),
    });
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return err instanceof Error ? err.message : String(err);
}
