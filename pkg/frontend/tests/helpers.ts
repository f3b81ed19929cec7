import type { AnswerEnvelope, RetrievedDoc } from "../src/types.js";
import type { FetchLike } from "../src/api.js";

export function makeRetrieved(docId: string, chunkIndex = 0, score = 0.5): RetrievedDoc {
  return {
    chunk: {
      chunk_id: `${docId}#${chunkIndex}`,
      doc_id: docId,
      index: chunkIndex,
      start_char: 0,
      end_char: 10,
      text: `body of ${docId}`,
    },
    score,
    source_title: `Title of ${docId}`,
    spec_label: docId.includes("334") ? "23.334" : null,
  };
}

export function makeEnvelope(overrides: Partial<AnswerEnvelope> = {}): AnswerEnvelope {
  const retrieved = overrides.retrieved ?? [makeRetrieved("doc-a")];
  const seen = new Set<string>();
  const references = overrides.references ??
    retrieved
      .filter((d) => !seen.has(d.chunk.doc_id) && seen.add(d.chunk.doc_id))
      .map((d) => ({
        doc_id: d.chunk.doc_id,
        source_title: d.source_title,
        spec_label: d.spec_label,
      }));
  return {
    answer: "an answer",
    references,
    retrieved,
    verdict: "ok",
    standalone_query: "the standalone question",
    ...overrides,
  };
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

/** Fake fetch that records requests and replays scripted JSON responses. */
export function stubFetch(
  responder: (url: string, init?: RequestInit) => { status: number; body: unknown },
): { fetchFn: FetchLike; requests: RecordedRequest[] } {
  const requests: RecordedRequest[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    requests.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : null,
    });
    const { status, body } = responder(url, init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, requests };
}

let sessionCounter = 0;

/** Standard responder: create sessions and answer queries with `envelope`. */
export function apiResponder(envelope: AnswerEnvelope) {
  return (url: string): { status: number; body: unknown } => {
    if (url.endsWith("/v1/sessions")) {
      sessionCounter += 1;
      return { status: 201, body: { session_id: `session-${sessionCounter}` } };
    }
    if (url.includes("/query")) {
      return { status: 200, body: envelope };
    }
    return { status: 404, body: { code: "not_found", message: "no route" } };
  };
}
