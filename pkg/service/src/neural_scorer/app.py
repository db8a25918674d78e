"""FastAPI application: GET /health, POST /embed, POST /bertscore.

Configuration is environment-only:
  SCORER_EMBED_MODEL      encoder for /embed  (default sentence-transformers/all-MiniLM-L6-v2;
                          use hash:<dim> for the deterministic offline backend)
  SCORER_BERTSCORE_MODEL  encoder for /bertscore (default distilroberta-base)
  SCORER_MAX_BATCH        per-request batch cap (default 256)
  SCORER_BASELINE         rescaling baseline in (0,1); 0 disables (default 0)
  SCORER_PORT             serve port for the console entry point (default 8629)

``/caption`` is a reserved path and returns 501.
"""

from __future__ import annotations

import os
from functools import lru_cache

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .encoders import make_encoder
from .scoring import score_batch


def _int_env(name: str, default: int) -> int:
    return int(os.environ.get(name, default))


class Settings:
    def __init__(self):
        self.embed_model = os.environ.get(
            "SCORER_EMBED_MODEL", "sentence-transformers/all-MiniLM-L6-v2"
        )
        self.bertscore_model = os.environ.get("SCORER_BERTSCORE_MODEL", "distilroberta-base")
        self.max_batch = _int_env("SCORER_MAX_BATCH", 256)
        self.baseline = float(os.environ.get("SCORER_BASELINE", "0"))
        self.port = _int_env("SCORER_PORT", 8629)


class EmbedRequest(BaseModel):
    texts: list[str]


class EmbedResponse(BaseModel):
    vectors: list[list[float]]
    dim: int
    model: str


class BertScoreRequest(BaseModel):
    candidates: list[str]
    references: list[str]
    rescale: bool = Field(default=False, description="apply baseline rescaling")


class BertScoreResponse(BaseModel):
    f1: list[float]
    model: str


def create_app(settings: Settings | None = None) -> FastAPI:
    settings = settings or Settings()
    app = FastAPI(title="neural-scorer", version=__version__)

    @lru_cache(maxsize=1)
    def embed_encoder():
        return make_encoder(settings.embed_model)

    @lru_cache(maxsize=1)
    def bertscore_encoder():
        if settings.bertscore_model == settings.embed_model:
            return embed_encoder()
        return make_encoder(settings.bertscore_model)

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "embed_model": settings.embed_model,
            "bertscore_model": settings.bertscore_model,
            "max_batch": settings.max_batch,
            "baseline": settings.baseline,
        }

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest):
        if len(request.texts) > settings.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds max batch size {settings.max_batch}",
            )
        encoder = embed_encoder()
        vectors = encoder.encode(request.texts)
        return EmbedResponse(
            vectors=[row.tolist() for row in vectors],
            dim=encoder.dim,
            model=encoder.model_id,
        )

    @app.post("/bertscore", response_model=BertScoreResponse)
    def bertscore(request: BertScoreRequest):
        if len(request.candidates) != len(request.references):
            raise HTTPException(
                status_code=400,
                detail=f"{len(request.candidates)} candidates vs "
                       f"{len(request.references)} references",
            )
        if len(request.candidates) > settings.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.candidates)} exceeds max batch size "
                       f"{settings.max_batch}",
            )
        encoder = bertscore_encoder()
        f1 = score_batch(
            encoder, request.candidates, request.references,
            baseline=settings.baseline, apply_rescale=request.rescale,
        )
        return BertScoreResponse(f1=f1, model=encoder.model_id)

    @app.post("/caption")
    def caption():
        raise HTTPException(status_code=501, detail="caption endpoint is reserved, not implemented")

    return app


def main() -> int:
    import uvicorn

    settings = Settings()
    uvicorn.run(create_app(settings), host="0.0.0.0", port=settings.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
