// Pure presentation logic: split a response into text/chip segments using
// the character offsets the service reports, and shape the ranked-item panel.

import type { ChatResponse, ItemSpan, RankedItem } from "./api.js";

export interface TextSegment {
  kind: "text";
  text: string;
}

export interface ChipSegment {
  kind: "chip";
  text: string;
  itemId: string;
  name: string;
}

export type Segment = TextSegment | ChipSegment;

export interface PanelEntry {
  itemId: string;
  name: string;
  prob: number;
  rank: number;
}

/**
 * Split `response` into plain-text runs and item chips. Spans must be
 * non-overlapping; they are applied in char_start order. Concatenating the
 * segment texts always reproduces the response string exactly.
 */
export function buildSegments(response: string, spans: ItemSpan[]): Segment[] {
  const ordered = [...spans].sort((a, b) => a.char_start - b.char_start);
  const segments: Segment[] = [];
  let cursor = 0;
  for (const span of ordered) {
    if (span.char_start < cursor || span.char_end > response.length) {
      throw new RangeError(
        `span [${span.char_start}, ${span.char_end}) out of bounds at cursor ${cursor}`,
      );
    }
    if (span.char_start > cursor) {
      segments.push({ kind: "text", text: response.slice(cursor, span.char_start) });
    }
    segments.push({
      kind: "chip",
      text: response.slice(span.char_start, span.char_end),
      itemId: span.item_id,
      name: span.name,
    });
    cursor = span.char_end;
  }
  if (cursor < response.length) {
    segments.push({ kind: "text", text: response.slice(cursor) });
  }
  return segments;
}

/** Concatenate segment texts back into the original response string. */
export function flattenSegments(segments: Segment[]): string {
  return segments.map((s) => s.text).join("");
}

/** Top-k alternatives for the side panel: at most `k`, in the server's order. */
export function panelEntries(items: RankedItem[], k: number): PanelEntry[] {
  return items.slice(0, Math.max(0, k)).map((item, i) => ({
    itemId: item.id,
    name: item.name,
    prob: item.prob,
    rank: i + 1,
  }));
}

/** Convenience wrapper used by the controller and the round-trip test. */
export function renderTurn(resp: ChatResponse, k: number) {
  return {
    segments: buildSegments(resp.response, resp.item_spans),
    panel: panelEntries(resp.items, k),
  };
}
