"""The online query pipeline: condense, retrieve, compose, generate, verify.

References in the final envelope are assembled from retrieval metadata, never
parsed out of model output, so the source list stays trustworthy even against
a generator that fabricates citations. When retrieval comes back empty the
generation call is skipped entirely and a predefined notice is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Chunk
from .embedder import Embedder
from .errors import EmptyInput, ProviderError
from .history import Session, SessionStore, Turn, make_turn, window
from .kb import KnowledgeBase
from .llm import SCRIPT_MISS, ChatMessage, LlmClient

CONDENSE_SYSTEM_PROMPT = (
    "Rewrite the user's new question as a single self-contained question, "
    "resolving pronouns and references using the conversation so far. "
    "Output only the rewritten question."
)

DEFAULT_PERSONA_PROMPT = (
    "Assume you are a 3GPP standard expert and need to provide a very "
    "comprehensive answer to a non-experienced trainee.\n"
    "Answer ONLY from the numbered CONTEXT blocks. If the context is "
    "insufficient, say so."
)

DEFAULT_NO_DOCS_MESSAGE = "No documents in the knowledge base are related to your query."
DEFAULT_REFUSAL_MESSAGE = "The generated answer was withheld by the output filter."

PROMPT_CHAR_BUDGET = 96_000
OVERFETCH_FACTOR = 4

VERDICT_OK = "ok"
VERDICT_NO_DOCUMENTS = "no_documents"
VERDICT_FILTERED = "filtered"


@dataclass(frozen=True)
class RetrievalParams:
    k: int = 4
    min_score: float = 0.15
    excluded_doc_ids: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not -1.0 <= self.min_score <= 1.0:
            raise ValueError("min_score must be in [-1, 1]")


@dataclass(frozen=True)
class RetrievedDoc:
    chunk: Chunk
    score: float
    source_title: str
    spec_label: str | None


@dataclass(frozen=True)
class Reference:
    doc_id: str
    source_title: str
    spec_label: str | None


@dataclass
class VerifyConfig:
    no_docs_message: str = DEFAULT_NO_DOCS_MESSAGE
    refusal_message: str = DEFAULT_REFUSAL_MESSAGE
    banned_keywords: list[str] = field(default_factory=list)


@dataclass
class PersonaConfig:
    system_prompt: str = DEFAULT_PERSONA_PROMPT


@dataclass
class AnswerEnvelope:
    answer: str
    references: list[Reference]
    retrieved: list[RetrievedDoc]
    verdict: str
    standalone_query: str


def condense_query(
    new_query: str,
    hist: list[Turn],
    llm: LlmClient,
    strict: bool = False,
) -> str:
    """Rewrite a follow-up question as a self-contained one.

    With no history the query is already self-contained and no model call is
    made. An empty or unmatched reply falls back to the raw query; provider
    failures do too unless ``strict`` is set.
    """
    if not new_query or not new_query.strip():
        raise EmptyInput("query must be non-empty")
    if not hist:
        return new_query
    lines = []
    for turn in hist:
        lines.append(f"Q: {turn.query}")
        lines.append(f"A: {turn.answer}")
    lines.append(f"New question: {new_query}")
    messages = [
        ChatMessage("system", CONDENSE_SYSTEM_PROMPT),
        ChatMessage("user", "\n".join(lines)),
    ]
    try:
        reply = llm.complete(messages).strip()
    except ProviderError:
        if strict:
            raise
        return new_query
    if not reply or reply == SCRIPT_MISS:
        return new_query
    return reply


def retrieve(
    standalone: str,
    params: RetrievalParams,
    kb: KnowledgeBase,
    embedder: Embedder,
) -> list[RetrievedDoc]:
    """Embed the standalone query and fetch the top passages above threshold.

    Over-fetches by a factor of four so that excluded documents and the score
    threshold can be applied without a second index pass.
    """
    q = embedder.embed_query(standalone)
    hits = kb.index.search_knn(q, k=OVERFETCH_FACTOR * params.k)
    out: list[RetrievedDoc] = []
    for hit in hits:
        if hit.score < params.min_score:
            continue  # hits are score-ordered, but keep scanning for clarity
        chunk = kb.chunks.get(hit.chunk_id)
        if chunk is None or chunk.doc_id in params.excluded_doc_ids:
            continue
        doc = kb.documents.get(chunk.doc_id)
        out.append(
            RetrievedDoc(
                chunk=chunk,
                score=hit.score,
                source_title=doc.title if doc else chunk.doc_id,
                spec_label=doc.spec_label if doc else None,
            )
        )
        if len(out) >= params.k:
            break
    return out


def _context_block(i: int, doc: RetrievedDoc) -> str:
    label = f" ({doc.spec_label})" if doc.spec_label else ""
    return f"[{i}] source={doc.source_title}{label} chunk={doc.chunk.chunk_id}\n{doc.chunk.text}"


def _assemble(
    standalone: str, docs: list[RetrievedDoc], hist: list[Turn], persona: PersonaConfig
) -> list[ChatMessage]:
    system = persona.system_prompt
    if docs:
        blocks = "\n\n".join(_context_block(i + 1, d) for i, d in enumerate(docs))
        system = f"{system}\n\nCONTEXT:\n\n{blocks}"
    messages = [ChatMessage("system", system)]
    for turn in hist:
        messages.append(ChatMessage("user", turn.query))
        if turn.answer:
            messages.append(ChatMessage("assistant", turn.answer))
    messages.append(ChatMessage("user", standalone))
    return messages


def compose_llm_input(
    standalone: str,
    docs: list[RetrievedDoc],
    hist: list[Turn],
    persona: PersonaConfig | None = None,
) -> list[ChatMessage]:
    """Build the generation prompt: persona + numbered context, history, query.

    If the total content exceeds the character budget, whole history turns are
    dropped oldest-first; only once history is gone are context blocks dropped,
    last-first (lowest score first).
    """
    persona = persona or PersonaConfig()
    hist = list(hist)
    docs = list(docs)
    messages = _assemble(standalone, docs, hist, persona)
    total = sum(len(m.content) for m in messages)
    while total > PROMPT_CHAR_BUDGET and hist:
        hist.pop(0)
        messages = _assemble(standalone, docs, hist, persona)
        total = sum(len(m.content) for m in messages)
    while total > PROMPT_CHAR_BUDGET and len(docs) > 1:
        docs.pop()
        messages = _assemble(standalone, docs, hist, persona)
        total = sum(len(m.content) for m in messages)
    return messages


def verify_output(
    tentative: str, docs: list[RetrievedDoc], vcfg: VerifyConfig
) -> tuple[str, str]:
    """Output gate: no-retrieval notice, keyword filter, or pass-through."""
    if not docs:
        return vcfg.no_docs_message, VERDICT_NO_DOCUMENTS
    lowered = tentative.lower()
    for keyword in vcfg.banned_keywords:
        if keyword.lower() in lowered:
            return vcfg.refusal_message, VERDICT_FILTERED
    return tentative, VERDICT_OK


def collect_references(retrieved: list[RetrievedDoc]) -> list[Reference]:
    """Deduplicate sources by document id, keeping first-appearance order."""
    seen: set[str] = set()
    refs: list[Reference] = []
    for doc in retrieved:
        if doc.chunk.doc_id in seen:
            continue
        seen.add(doc.chunk.doc_id)
        refs.append(Reference(doc.chunk.doc_id, doc.source_title, doc.spec_label))
    return refs


@dataclass
class Pipeline:
    """Wires the modules into the full conversational answer flow.

    One LLM client serves both condensation and generation unless a separate
    ``generator`` is supplied.
    """

    kb: KnowledgeBase
    embedder: Embedder
    llm: LlmClient
    retrieval: RetrievalParams = RetrievalParams()
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    persona: PersonaConfig = field(default_factory=PersonaConfig)
    generator: LlmClient | None = None
    history_window: int = 10
    strict_condense: bool = False

    def _gen(self) -> LlmClient:
        return self.generator if self.generator is not None else self.llm

    def answer(
        self,
        store: SessionStore,
        session_id: str,
        new_query: str,
        k: int | None = None,
        excluded_doc_ids: set[str] | None = None,
    ) -> AnswerEnvelope:
        """Run the pipeline for one turn and append it to the session.

        Provider failures propagate; the session is not appended on error.
        """
        if not new_query or not new_query.strip():
            raise EmptyInput("question must be non-empty")
        session = store.get(session_id)
        hist = window(session, self.history_window)

        params = self.retrieval
        if k is not None or excluded_doc_ids is not None:
            params = RetrievalParams(
                k=k if k is not None else params.k,
                min_score=params.min_score,
                excluded_doc_ids=frozenset(excluded_doc_ids)
                if excluded_doc_ids is not None
                else params.excluded_doc_ids,
            )

        standalone = condense_query(new_query, hist, self.llm, strict=self.strict_condense)
        retrieved = retrieve(standalone, params, self.kb, self.embedder)

        if not retrieved:
            answer_text, verdict = verify_output("", [], self.verify)
        else:
            messages = compose_llm_input(standalone, retrieved, hist, self.persona)
            tentative = self._gen().complete(messages)
            answer_text, verdict = verify_output(tentative, retrieved, self.verify)

        references = collect_references(retrieved)
        turn = make_turn(new_query, answer_text, [r.doc_id for r in references])
        store.append_turn(session_id, turn)
        return AnswerEnvelope(
            answer=answer_text,
            references=references,
            retrieved=retrieved,
            verdict=verdict,
            standalone_query=standalone,
        )


def answer(
    store: SessionStore,
    session: Session,
    new_query: str,
    kb: KnowledgeBase,
    embedder: Embedder,
    llm: LlmClient,
    retrieval: RetrievalParams | None = None,
    verify: VerifyConfig | None = None,
    persona: PersonaConfig | None = None,
) -> AnswerEnvelope:
    """Functional entry point over :class:`Pipeline` for one-shot use."""
    pipeline = Pipeline(
        kb=kb,
        embedder=embedder,
        llm=llm,
        retrieval=retrieval or RetrievalParams(),
        verify=verify or VerifyConfig(),
        persona=persona or PersonaConfig(),
    )
    return pipeline.answer(store, session.session_id, new_query)
