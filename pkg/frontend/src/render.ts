import type { AnswerEnvelope, Reference, RetrievedDoc } from "./types.js";
import type { UiMessage, UiState } from "./state.js";

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function referenceLabel(ref: Reference): string {
  const label = ref.spec_label ? ` (${ref.spec_label})` : "";
  return `${ref.source_title}${label}`;
}

export function renderReferences(references: Reference[]): string {
  if (references.length === 0) return "";
  const items = references
    .map((r) => `<li class="reference" data-doc-id="${escapeHtml(r.doc_id)}">${escapeHtml(referenceLabel(r))}</li>`)
    .join("");
  return `<div class="references"><span class="references-title">References:</span><ul>${items}</ul></div>`;
}

function renderRetrievedDoc(doc: RetrievedDoc, excluded: Set<string>): string {
  const isExcluded = excluded.has(doc.chunk.doc_id);
  const label = doc.spec_label ? ` (${doc.spec_label})` : "";
  return `
    <details class="retrieved-doc">
      <summary>
        <span class="retrieved-title">${escapeHtml(doc.source_title)}${escapeHtml(label)}</span>
        <span class="retrieved-score">score ${doc.score.toFixed(3)}</span>
        <button type="button" class="exclude-toggle${isExcluded ? " excluded" : ""}"
                data-doc-id="${escapeHtml(doc.chunk.doc_id)}">
          ${isExcluded ? "Include again" : "Exclude source"}
        </button>
      </summary>
      <pre class="retrieved-text">${escapeHtml(doc.chunk.text)}</pre>
    </details>`;
}

export function renderRetrievedPanel(env: AnswerEnvelope, excluded: Set<string>): string {
  if (env.retrieved.length === 0) return "";
  const docs = env.retrieved.map((d) => renderRetrievedDoc(d, excluded)).join("");
  return `
    <details class="retrieved-panel">
      <summary>Retrieved context (${env.retrieved.length})</summary>
      ${docs}
    </details>`;
}

export function renderEnvelope(env: AnswerEnvelope, excluded: Set<string>): string {
  const interpreted =
    env.standalone_query.trim().length > 0
      ? `<div class="interpreted">Interpreted as: ${escapeHtml(env.standalone_query)}</div>`
      : "";
  return `${interpreted}${renderReferences(env.references)}${renderRetrievedPanel(env, excluded)}`;
}

export function renderMessage(msg: UiMessage, excluded: Set<string>): string {
  const body = `<div class="text">${escapeHtml(msg.text)}</div>`;
  const extras = msg.envelope ? renderEnvelope(msg.envelope, excluded) : "";
  return `<div class="message ${msg.role}">${body}${extras}</div>`;
}

export function renderMessages(state: UiState): string {
  return state.messages.map((m) => renderMessage(m, state.excludedDocIds)).join("");
}

export function renderStatusBar(state: UiState): string {
  const excluded = [...state.excludedDocIds];
  if (excluded.length === 0) return "";
  return `<div class="exclusion-bar">Excluding ${excluded.length} source${excluded.length > 1 ? "s" : ""} from retrieval</div>`;
}
