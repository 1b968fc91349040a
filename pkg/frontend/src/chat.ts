// Chat controller: session lifecycle, one in-flight request at a time,
// turn history, and error recovery. No DOM access so it is unit-testable.

import { ApiClient, type ChatResponse } from "./api.js";
import { renderTurn, type PanelEntry, type Segment } from "./segments.js";

export interface UiTurn {
  role: "user" | "assistant";
  text: string;
  segments?: Segment[];
  panel?: PanelEntry[];
  turnIndex?: number;
  latencyMs?: number;
}

export interface ControllerState {
  turns: UiTurn[];
  busy: boolean;
  error: string | null;
  sessionId: string | null;
}

export interface ControllerOptions {
  k?: number;
  onChange?: (state: ControllerState) => void;
}

export class ChatController {
  private client: ApiClient;
  private k: number;
  private onChange: (state: ControllerState) => void;
  private state: ControllerState = {
    turns: [],
    busy: false,
    error: null,
    sessionId: null,
  };

  constructor(client: ApiClient, options: ControllerOptions = {}) {
    this.client = client;
    this.k = options.k ?? 5;
    this.onChange = options.onChange ?? (() => {});
  }

  getState(): ControllerState {
    return this.state;
  }

  /** A message can be sent when it is non-empty and nothing is in flight. */
  canSend(message: string): boolean {
    return message.trim().length > 0 && !this.state.busy;
  }

  /** Text composed when the user clicks an alternative they already know. */
  composeSeen(name: string): string {
    return `I have seen ${name}`;
  }

  private update(partial: Partial<ControllerState>): void {
    this.state = { ...this.state, ...partial };
    this.onChange(this.state);
  }

  private async ensureSession(): Promise<string> {
    if (this.state.sessionId === null) {
      const sessionId = await this.client.createSession({ k: this.k });
      this.update({ sessionId });
    }
    return this.state.sessionId as string;
  }

  async send(message: string): Promise<ChatResponse | null> {
    if (!this.canSend(message)) {
      return null;
    }
    const text = message.trim();
    this.update({
      busy: true,
      error: null,
      turns: [...this.state.turns, { role: "user", text }],
    });
    try {
      const sessionId = await this.ensureSession();
      const resp = await this.client.sendChat(sessionId, text, this.k);
      const { segments, panel } = renderTurn(resp, this.k);
      this.update({
        busy: false,
        turns: [
          ...this.state.turns,
          {
            role: "assistant",
            text: resp.response,
            segments,
            panel,
            turnIndex: resp.turn_index,
            latencyMs: resp.latency_ms,
          },
        ],
      });
      return resp;
    } catch (err) {
      // Drop the optimistic user turn so a retry does not duplicate it.
      this.update({
        busy: false,
        error: err instanceof Error ? err.message : String(err),
        turns: this.state.turns.slice(0, -1),
      });
      return null;
    }
  }

  async reset(): Promise<void> {
    const sessionId = this.state.sessionId;
    this.update({ turns: [], error: null, sessionId: null });
    if (sessionId !== null) {
      try {
        await this.client.deleteSession(sessionId);
      } catch {
        // The server may have already expired the session.
      }
    }
  }
}
