"""HTTP inference API over a model registry.

Endpoints:
  POST /inference_by_model        {"model": "name[@version]", "text": "..."}
  POST /batch_inference_by_model  {"model": ..., "items": [{"id","text"},...]}
  GET  /models

Request bodies are validated strictly (unknown fields rejected). Responses
echo the resolved model name and version. Loaded models are immutable and
cached; serving never mutates registry state.
"""

from __future__ import annotations

from threading import Lock

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .classifier import LinearTextModel, predict
from .errors import ModelNotFoundError
from .registry import ModelRegistry


class InferenceRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    model: str
    text: str


class BatchItem(BaseModel):
    model_config = ConfigDict(extra="forbid")
    id: str
    text: str


class BatchInferenceRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    model: str
    items: list[BatchItem] = Field(min_length=1)


class _ModelCache:
    """Per-(name, version) cache; artifacts are immutable once registered."""

    def __init__(self, registry: ModelRegistry):
        self.registry = registry
        self._models: dict[tuple[str, int], LinearTextModel] = {}
        self._lock = Lock()

    def get(self, reference: str) -> LinearTextModel:
        entry = self.registry.resolve(reference)
        key = (entry.name, entry.version)
        with self._lock:
            model = self._models.get(key)
            if model is None:
                model = self.registry.load(f"{entry.name}@{entry.version}")
                self._models[key] = model
        return model


def _prediction_payload(model: LinearTextModel, text: str) -> list[dict]:
    return [{"label": label, "score": score}
            for label, score in predict(model, text)]


def create_app(registry: ModelRegistry) -> FastAPI:
    app = FastAPI(title="saine inference engine")
    cache = _ModelCache(registry)

    def not_found(reference: str) -> JSONResponse:
        return JSONResponse(
            status_code=404,
            content={"error": "model_not_found", "model": reference})

    @app.post("/inference_by_model")
    def inference_by_model(request: InferenceRequest):
        try:
            model = cache.get(request.model)
        except ModelNotFoundError:
            return not_found(request.model)
        return {
            "model": model.metadata.name,
            "version": model.metadata.version,
            "predictions": _prediction_payload(model, request.text),
        }

    @app.post("/batch_inference_by_model")
    def batch_inference_by_model(request: BatchInferenceRequest):
        try:
            model = cache.get(request.model)
        except ModelNotFoundError:
            return not_found(request.model)
        results = [
            {"id": item.id,
             "predictions": _prediction_payload(model, item.text)}
            for item in request.items
        ]
        return {
            "model": model.metadata.name,
            "version": model.metadata.version,
            "results": results,
        }

    @app.get("/models")
    def list_models():
        return {
            "models": [
                {
                    "name": entry.name,
                    "version": entry.version,
                    "architecture_tag": entry.architecture_tag,
                    "parent": list(entry.parent) if entry.parent else None,
                }
                for entry in registry.entries()
            ]
        }

    return app


def run_server(models_dir: str, host: str = "127.0.0.1",
               port: int = 8000) -> None:
    import uvicorn

    app = create_app(ModelRegistry(models_dir))
    uvicorn.run(app, host=host, port=port)
