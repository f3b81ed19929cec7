import { ApiClient, ApiRequestError } from "./api.js";
import type { AnswerEnvelope } from "./types.js";

export interface UiMessage {
  role: "user" | "assistant" | "notice" | "error";
  text: string;
  envelope?: AnswerEnvelope;
}

export interface UiState {
  sessionId: string | null;
  messages: UiMessage[];
  lastEnvelope: AnswerEnvelope | null;
  excludedDocIds: Set<string>;
  busy: boolean;
}

export type Listener = (state: UiState) => void;

/**
 * Chat state container. Exclusions accumulate across turns and ride along
 * with every query; starting a new session clears them. Only one request is
 * in flight per session: sendQuery is a no-op while busy (the input is also
 * disabled in the view).
 */
export class ChatStore {
  readonly state: UiState = {
    sessionId: null,
    messages: [],
    lastEnvelope: null,
    excludedDocIds: new Set(),
    busy: false,
  };

  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  async newSession(): Promise<void> {
    this.state.busy = true;
    this.emit();
    try {
      const { session_id } = await this.api.createSession();
      this.state.sessionId = session_id;
      this.state.messages = [];
      this.state.lastEnvelope = null;
      this.state.excludedDocIds = new Set();
    } catch (err) {
      this.state.messages.push({ role: "error", text: describeError(err) });
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  async sendQuery(text: string): Promise<void> {
    const question = text.trim();
    if (!question || this.state.busy || !this.state.sessionId) return;
    this.state.busy = true;
    this.state.messages.push({ role: "user", text: question });
    this.emit();
    try {
      const envelope = await this.api.query(this.state.sessionId, {
        question,
        excluded_doc_ids: [...this.state.excludedDocIds],
      });
      this.state.lastEnvelope = envelope;
      this.state.messages.push({
        role: envelope.verdict === "ok" ? "assistant" : "notice",
        text: envelope.answer,
        envelope,
      });
    } catch (err) {
      this.state.messages.push({ role: "error", text: describeError(err) });
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  toggleExclude(docId: string): void {
    if (this.state.excludedDocIds.has(docId)) {
      this.state.excludedDocIds.delete(docId);
    } else {
      this.state.excludedDocIds.add(docId);
    }
    this.emit();
  }
}

export function describeError(err: unknown): string {
  if (err instanceof ApiRequestError) return `${err.code}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}
