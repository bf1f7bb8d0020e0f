"""HTTP session service for the interactive loop.

Thin JSON layer over the evolution module: sessions are created from a
registered model checkpoint, the client submits two parent ids per
generation, and images come back as PNG resources. Generation steps are
serialized per session with a non-blocking lock; a busy session answers 409
rather than queueing, and rejected requests never touch session state.
"""

import json
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel

from .dataio import RunLogWriter, load_checkpoint, png_bytes
from .errors import SelectionError
from .evolution import (EvolutionSession, generation_stepped_event, init_population,
                        session_created_event, step_generation)
from .sampler import Genotype  # noqa: F401  (re-export for server consumers)

DEFAULT_N = 10
DEFAULT_T_INTERP0 = 100
DEFAULT_S = 100


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ModelEntry:
    model_id: str
    model: object
    sched: object
    path: Optional[str] = None


class ModelRegistry:
    def __init__(self):
        self._entries: dict[str, ModelEntry] = {}

    def add(self, model_id: str, model, sched, path: Optional[str] = None) -> None:
        self._entries[model_id] = ModelEntry(model_id, model, sched, path)

    def add_checkpoint(self, path) -> str:
        model, sched = load_checkpoint(path)
        model_id = Path(path).stem
        self.add(model_id, model, sched, str(path))
        return model_id

    def get(self, model_id: str) -> ModelEntry:
        if model_id not in self._entries:
            raise ApiError(404, "unknown_model", f"no model registered as {model_id!r}")
        return self._entries[model_id]

    def describe(self) -> list[dict]:
        return [{"id": e.model_id,
                 "T": e.sched.T,
                 "image_shape": list(e.model.config.image_shape),
                 "checkpoint": e.path}
                for e in self._entries.values()]


@dataclass
class SessionState:
    session: EvolutionSession
    model_id: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    events: list = field(default_factory=list)
    images: dict = field(default_factory=dict)   # individual id -> PNG bytes
    log_writer: Optional[RunLogWriter] = None

    def record(self, event: dict) -> None:
        self.events.append(event)
        if self.log_writer is not None:
            self.log_writer.write(event)

    def cache_population_images(self) -> None:
        for ind in self.session.population:
            self.images[ind.id] = png_bytes(ind.image)


class SessionStore:
    def __init__(self, registry: ModelRegistry, run_log_dir=None):
        self.registry = registry
        self.run_log_dir = Path(run_log_dir) if run_log_dir else None
        self._sessions: dict[str, SessionState] = {}
        self._create_lock = threading.Lock()

    def create(self, model_id: str, N: int, t_interp0: int, s: int,
               seed: Optional[int]) -> SessionState:
        entry = self.registry.get(model_id)
        if N < 2:
            raise ApiError(422, "invalid_population_size", f"N must be >= 2, got {N}")
        if s < 1:
            raise ApiError(422, "invalid_step_increment", f"s must be >= 1, got {s}")
        if not 0 <= t_interp0 <= entry.sched.T:
            raise ApiError(422, "invalid_t_interp",
                           f"t_interp0 must be in [0, {entry.sched.T}], got {t_interp0}")
        if seed is None:
            seed = secrets.randbits(32)
        session = init_population(entry.model, entry.sched, N=N, seed=seed,
                                  t_interp0=t_interp0, s=s)
        writer = None
        if self.run_log_dir is not None:
            self.run_log_dir.mkdir(parents=True, exist_ok=True)
            writer = RunLogWriter(self.run_log_dir / f"{session.session_id}.jsonl")
        state = SessionState(session=session, model_id=model_id, log_writer=writer)
        state.record(session_created_event(session, entry.sched, model_ref=model_id))
        state.cache_population_images()
        with self._create_lock:
            self._sessions[session.session_id] = state
        return state

    def get(self, session_id: str) -> SessionState:
        if session_id not in self._sessions:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return self._sessions[session_id]


def _image_url(session_id: str, individual_id: str) -> str:
    return f"/api/images/{session_id}:{individual_id}"


def _population_payload(state: SessionState) -> dict:
    s = state.session
    return {
        "session_id": s.session_id,
        "model_id": state.model_id,
        "generation": s.generation,
        "t_interp": s.t_interp,
        "s": s.s,
        "T": s.T,
        "N": s.N,
        "images": [{
            "id": ind.id,
            "url": _image_url(s.session_id, ind.id),
            "generation": ind.generation,
            "parent_ids": list(ind.parent_ids) if ind.parent_ids else None,
            "lambda": ind.lambda_used,
        } for ind in s.population],
    }


class CreateSessionRequest(BaseModel):
    model_id: str
    N: Optional[int] = None
    t_interp0: Optional[int] = None
    s: Optional[int] = None
    seed: Optional[int] = None


class SelectRequest(BaseModel):
    parent_a: str
    parent_b: str


def create_app(registry: ModelRegistry, run_log_dir=None,
               defaults: Optional[dict] = None) -> FastAPI:
    app = FastAPI(title="slerpevo", docs_url=None, redoc_url=None)
    store = SessionStore(registry, run_log_dir=run_log_dir)
    app.state.store = store
    defaults = defaults or {}

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422,
                            content={"code": "validation_error", "message": str(exc.errors())})

    @app.get("/api/models")
    def get_models():
        return {"models": registry.describe()}

    @app.post("/api/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        def pick(value, key, fallback):
            return value if value is not None else defaults.get(key, fallback)

        state = store.create(model_id=req.model_id,
                             N=pick(req.N, "N", DEFAULT_N),
                             t_interp0=pick(req.t_interp0, "t_interp0", DEFAULT_T_INTERP0),
                             s=pick(req.s, "s", DEFAULT_S),
                             seed=req.seed)
        return _population_payload(state)

    @app.get("/api/sessions/{session_id}/population")
    def get_population(session_id: str):
        return _population_payload(store.get(session_id))

    @app.get("/api/sessions/{session_id}/status")
    def get_status(session_id: str):
        state = store.get(session_id)
        return {
            "session_id": session_id,
            "generation": state.session.generation,
            "t_interp": state.session.t_interp,
            "in_flight": state.lock.locked(),
        }

    @app.get("/api/sessions/{session_id}/history")
    def get_history(session_id: str):
        state = store.get(session_id)
        return {"history": [{
            "generation": r.generation,
            "parent_a": r.parent_a,
            "parent_b": r.parent_b,
            "t_interp_used": r.t_interp_used,
            "lambdas": r.lambdas,
            "individual_ids": r.individual_ids,
        } for r in state.session.history]}

    @app.get("/api/sessions/{session_id}/log")
    def get_log(session_id: str):
        state = store.get(session_id)
        body = "".join(json.dumps(e, sort_keys=True) + "\n" for e in state.events)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    @app.post("/api/sessions/{session_id}/select")
    def submit_selection(session_id: str, req: SelectRequest):
        state = store.get(session_id)
        if req.parent_a == req.parent_b:
            raise ApiError(422, "duplicate_parents", "parent ids must be distinct")
        entry = registry.get(state.model_id)
        if not state.lock.acquire(blocking=False):
            raise ApiError(409, "step_in_flight",
                           "a generation step is already running for this session")
        try:
            try:
                step_generation(state.session, req.parent_a, req.parent_b,
                                entry.model, entry.sched)
            except SelectionError as exc:
                raise ApiError(422, "invalid_selection", str(exc)) from exc
            state.record(generation_stepped_event(state.session.history[-1]))
            state.cache_population_images()
        finally:
            state.lock.release()
        return _population_payload(state)

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        if ":" not in image_id:
            raise ApiError(404, "unknown_image", f"no image {image_id!r}")
        session_id, individual_id = image_id.split(":", 1)
        state = store.get(session_id)
        if individual_id not in state.images:
            raise ApiError(404, "unknown_image", f"no image {image_id!r}")
        return Response(content=state.images[individual_id], media_type="image/png")

    return app
