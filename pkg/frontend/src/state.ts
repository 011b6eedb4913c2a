// Transcript state for one session. Pure data transforms so the reducer is
// unit-testable without a DOM; every entry mirrors a raw API response.

import type { TurnResult } from "./api";

export interface TranscriptEntry {
  kind: "turn" | "override";
  result: TurnResult;
}

export interface SessionState {
  sessionId: string | null;
  transcript: TranscriptEntry[];
  busy: boolean;
  error: string | null;
}

export function initialState(): SessionState {
  return { sessionId: null, transcript: [], busy: false, error: null };
}

export function withSession(_state: SessionState, id: string): SessionState {
  return { ...initialState(), sessionId: id };
}

export function withTurn(
  state: SessionState,
  result: TurnResult,
): SessionState {
  return {
    ...state,
    transcript: [...state.transcript, { kind: "turn", result }],
    busy: false,
    error: null,
  };
}

// An override rewrites the latest decision set rather than adding a turn:
// replace the trailing override entry if one exists, else append.
export function withOverride(
  state: SessionState,
  result: TurnResult,
): SessionState {
  const transcript = [...state.transcript];
  const last = transcript[transcript.length - 1];
  if (last !== undefined && last.kind === "override") {
    transcript[transcript.length - 1] = { kind: "override", result };
  } else {
    transcript.push({ kind: "override", result });
  }
  return { ...state, transcript, busy: false, error: null };
}

export function withError(state: SessionState, message: string): SessionState {
  return { ...state, busy: false, error: message };
}

export function currentDecisions(state: SessionState) {
  const last = state.transcript[state.transcript.length - 1];
  return last?.result.decisions ?? [];
}

export function currentInternalQuery(state: SessionState): string[] {
  const last = state.transcript[state.transcript.length - 1];
  return last?.result.internal_query ?? [];
}
