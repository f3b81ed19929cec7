// Wire types mirroring the /v1 API JSON exactly.

export interface Reference {
  doc_id: string;
  source_title: string;
  spec_label: string | null;
}

export interface ChunkInfo {
  chunk_id: string;
  doc_id: string;
  index: number;
  start_char: number;
  end_char: number;
  text: string;
}

export interface RetrievedDoc {
  chunk: ChunkInfo;
  score: number;
  source_title: string;
  spec_label: string | null;
}

export type Verdict = "ok" | "no_documents" | "filtered";

export interface AnswerEnvelope {
  answer: string;
  references: Reference[];
  retrieved: RetrievedDoc[];
  verdict: Verdict;
  standalone_query: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export interface QueryRequest {
  question: string;
  k?: number;
  excluded_doc_ids?: string[];
}

export interface TurnRecord {
  query: string;
  answer: string;
  references: string[];
  timestamp: string;
}

export interface IndexInfo {
  doc_count: number;
  chunk_count: number;
  dim: number;
  embedder_kind: string;
}
