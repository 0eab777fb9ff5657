import type { Assessment, Message } from "./types.js";

/**
 * Client-side transcript state for one open session.
 *
 * All ordering and dedup happens here: messages are keyed by turn number,
 * so replayed events after a stream reconnect are dropped and out-of-order
 * delivery cannot reorder the rendered transcript.
 */
export class SessionStore {
  readonly sessionId: string;
  private byTurn = new Map<number, Message>();
  closed = false;
  /** optimistic lock while a posted turn is in flight */
  sending = false;
  assessment: Assessment | null = null;

  constructor(sessionId: string) {
    this.sessionId = sessionId;
  }

  /** Returns the messages that were actually new (not dedup'd). */
  addMessages(messages: Message[]): Message[] {
    const fresh: Message[] = [];
    for (const message of messages) {
      if (this.byTurn.has(message.turn)) continue;
      this.byTurn.set(message.turn, message);
      fresh.push(message);
      if (message.terminal) this.closed = true;
    }
    return fresh;
  }

  get messages(): Message[] {
    return [...this.byTurn.values()].sort((a, b) => a.turn - b.turn);
  }

  get lastTurn(): number {
    let last = -1;
    for (const turn of this.byTurn.keys()) if (turn > last) last = turn;
    return last;
  }

  get inputDisabled(): boolean {
    return this.closed || this.sending || this.assessment !== null;
  }

  setAssessment(assessment: Assessment): void {
    this.assessment = assessment;
    this.closed = true;
  }
}
