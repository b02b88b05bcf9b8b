"""HTTP service exposing documents, matrices, and summarization.

The loaded model is immutable; controlled requests build masks per call and
never touch parameters.  The in-memory document store is guarded by a
single-writer lock.
"""

from __future__ import annotations

import threading
from typing import Literal, Optional

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .corpus import Document
from .extractor import DEFAULT_TOP_K
from .interaction import ControlSpec
from .pipeline import (
    ModelParams,
    heatmap_payload,
    summarize_abstract,
    summarize_extract,
)


class DocumentIn(BaseModel):
    text: str
    title: Optional[str] = None
    summary: Optional[str] = None


class SummarizeIn(BaseModel):
    doc_id: str
    mode: Literal["extract", "abstract"]
    k: int = Field(default=DEFAULT_TOP_K, ge=1)
    eps_n: float = Field(default=0.0, ge=0.0, le=1.0)
    eps_r: float = Field(default=0.0, ge=0.0, le=1.0)
    beam: int = Field(default=4, ge=1)
    max_len: int = Field(default=120, ge=1)


class DocumentStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._docs: dict[str, Document] = {}
        self._counter = 0

    def add(self, doc_in: DocumentIn) -> Document:
        with self._lock:
            self._counter += 1
            doc_id = f"doc-{self._counter}"
            doc = Document.from_raw(doc_id, doc_in.text, title=doc_in.title,
                                    summary=doc_in.summary)
            self._docs[doc_id] = doc
            return doc

    def get(self, doc_id: str) -> Optional[Document]:
        with self._lock:
            return self._docs.get(doc_id)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message})


def create_app(model: ModelParams) -> FastAPI:
    app = FastAPI(title="esca", version=__version__)
    # the control panel is served separately; allow it to call this API
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    store = DocumentStore()

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error(422, "invalid_request", str(exc.errors()[:3]))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/documents")
    def add_document(doc_in: DocumentIn):
        doc = store.add(doc_in)
        if doc.num_sentences == 0:
            return _error(422, "empty_document",
                          "text produced no sentences after tokenization")
        return {"doc_id": doc.id, "num_sentences": doc.num_sentences}

    @app.get("/documents/{doc_id}/matrix")
    def matrix(doc_id: str,
               eps_n: float = Query(default=0.0, ge=0.0, le=1.0),
               eps_r: float = Query(default=0.0, ge=0.0, le=1.0)):
        doc = store.get(doc_id)
        if doc is None:
            return _error(404, "not_found", f"unknown doc_id {doc_id!r}")
        control = ControlSpec(eps_novelty=eps_n, eps_relevance=eps_r)
        return heatmap_payload(model, doc, control)

    @app.post("/summarize")
    def summarize(req: SummarizeIn):
        doc = store.get(req.doc_id)
        if doc is None:
            return _error(404, "not_found", f"unknown doc_id {req.doc_id!r}")
        control = ControlSpec(eps_novelty=req.eps_n, eps_relevance=req.eps_r)
        if req.mode == "extract":
            return summarize_extract(model, doc, k=req.k, control=control)
        return summarize_abstract(model, doc, k=req.k, control=control,
                                  beam=req.beam, max_len=req.max_len)

    return app


def serve(checkpoint_path, host: str = "127.0.0.1", port: int = 8080):
    """Load a checkpoint and block serving HTTP."""
    import uvicorn

    from .pipeline import load_checkpoint

    model = load_checkpoint(checkpoint_path)
    uvicorn.run(create_app(model), host=host, port=port, log_level="warning")
