"""JSON-over-HTTP service wrapping the editing pipeline for interactive use.

Endpoints (all JSON unless noted):

    POST /sessions                      {"checkpoint": <doc>} | {"path": name}
    GET  /sessions/{id}/mesh?res=R      binary mesh (layout below)
    GET  /sessions/{id}/basis/{p}?res=R binary mesh with a scalar channel
    GET  /sessions/{id}/checkpoint      current snapshot as checkpoint JSON
    POST /sessions/{id}/edit            EditSpec JSON -> NDJSON event stream
    POST /sessions/{id}/semantic-edit   EditSpec JSON -> NDJSON event stream
    POST /sessions/{id}/smooth          flow config JSON -> NDJSON event stream
    POST /sessions/{id}/rigid-edit      rigid config JSON -> NDJSON event stream
    POST /sessions/{id}/undo            revert to the previous snapshot

Binary mesh layout (little-endian): magic ``FEMESH01`` (8 bytes), then
uint32 flags (bit 0: scalar channel present), uint32 vertex count, uint32
triangle count, float32 positions (3 per vertex), uint32 indices (3 per
triangle), float32 scalar per vertex when flagged.

One mutating operation runs per session at a time (HTTP 409 otherwise);
reads always serve the latest immutable snapshot and never block.
"""

from __future__ import annotations

import json
import queue
import struct
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .editing import EditSpec, edit, snapshot_id
from .errors import FieldEditError, InvalidSpec
from .fields import checkpoint_dict, field_from_dict, load_checkpoint
from .flows import FlowConfig, run_smoothing
from .geometry import marching_cubes
from .rigid import RigidConfig, rigid_edit
from .sensitivity import basis_rows
from .training import semantic_edit

MESH_MAGIC = b"FEMESH01"
UNDO_DEPTH = 50


class Session:
    def __init__(self, field):
        self.history = [field]
        self.index = 0
        self.lock = threading.Lock()

    @property
    def field(self):
        return self.history[self.index]

    def push(self, field):
        self.history = self.history[: self.index + 1] + [field]
        if len(self.history) > UNDO_DEPTH:
            self.history = self.history[-UNDO_DEPTH:]
        self.index = len(self.history) - 1

    def undo(self) -> bool:
        if self.index == 0:
            return False
        self.index -= 1
        return True


def encode_mesh(mesh, scalar=None) -> bytes:
    flags = 1 if scalar is not None else 0
    head = MESH_MAGIC + struct.pack("<III", flags, len(mesh.vertices),
                                    len(mesh.triangles))
    body = mesh.vertices.astype("<f4").tobytes() \
        + mesh.triangles.astype("<u4").tobytes()
    if scalar is not None:
        body += np.asarray(scalar, dtype="<f4").tobytes()
    return head + body


def create_app(model_dir: str | None = None, defaults: dict | None = None) -> FastAPI:
    app = FastAPI(title="fieldedit", version=__version__)
    sessions: dict[str, Session] = {}
    defaults = defaults or {}

    def get_session(sid: str) -> Session | None:
        return sessions.get(sid)

    def error(status: int, payload: dict) -> JSONResponse:
        return JSONResponse(payload, status_code=status)

    @app.exception_handler(FieldEditError)
    async def _fe_error(request, exc):
        status = 422 if isinstance(exc, InvalidSpec) else 400
        return JSONResponse(exc.payload(), status_code=status)

    @app.post("/sessions")
    async def create_session(request: Request):
        doc = await request.json()
        if "checkpoint" in doc:
            field = field_from_dict(doc["checkpoint"])
        elif "path" in doc:
            if model_dir is None:
                return error(422, {"error": "invalid-spec",
                                   "message": "no model directory configured"})
            p = (Path(model_dir) / doc["path"]).resolve()
            if not str(p).startswith(str(Path(model_dir).resolve())) or not p.exists():
                return error(404, {"error": "not-found", "message": "unknown model"})
            field = load_checkpoint(p)
        else:
            return error(422, {"error": "invalid-spec",
                               "message": "need 'checkpoint' or 'path'"})
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(field)
        return {"session": sid, "snapshot": snapshot_id(field),
                "params": int(field.param_count)}

    @app.get("/sessions/{sid}/mesh")
    def get_mesh(sid: str, res: int = 64):
        s = get_session(sid)
        if s is None:
            return error(404, {"error": "not-found", "message": "unknown session"})
        mesh = marching_cubes(s.field, res)
        return Response(encode_mesh(mesh), media_type="application/octet-stream")

    @app.get("/sessions/{sid}/basis/{p}")
    def get_basis(sid: str, p: int, res: int = 64):
        s = get_session(sid)
        if s is None:
            return error(404, {"error": "not-found", "message": "unknown session"})
        field = s.field
        if not 0 <= p < field.param_count:
            return error(422, {"error": "invalid-spec",
                               "message": f"parameter index {p} out of range"})
        mesh = marching_cubes(field, res)
        channel = basis_rows(field, mesh.vertices)[:, p]
        return Response(encode_mesh(mesh, scalar=channel),
                        media_type="application/octet-stream")

    @app.get("/sessions/{sid}/checkpoint")
    def get_checkpoint(sid: str):
        s = get_session(sid)
        if s is None:
            return error(404, {"error": "not-found", "message": "unknown session"})
        return checkpoint_dict(s.field)

    @app.post("/sessions/{sid}/undo")
    def undo(sid: str):
        s = get_session(sid)
        if s is None:
            return error(404, {"error": "not-found", "message": "unknown session"})
        if not s.lock.acquire(blocking=False):
            return error(409, {"error": "busy", "message": "edit in progress"})
        try:
            moved = s.undo()
            return {"undone": moved, "snapshot": snapshot_id(s.field)}
        finally:
            s.lock.release()

    def streaming_op(sid: str, runner):
        """Run a mutating op in a thread, stream NDJSON progress events."""
        s = get_session(sid)
        if s is None:
            return error(404, {"error": "not-found", "message": "unknown session"})
        if not s.lock.acquire(blocking=False):
            return error(409, {"error": "busy", "message": "edit in progress"})
        q: queue.Queue = queue.Queue()

        def emit(event: dict):
            q.put(event)

        def work():
            try:
                result = runner(s.field, emit)
                s.push(result)
                emit({"event": "done", "snapshot": snapshot_id(result)})
            except FieldEditError as e:
                emit({"event": "error", **e.payload()})
            except Exception as e:   # keep the stream well-formed
                emit({"event": "error", "error": "internal", "message": str(e)})
            finally:
                q.put(None)
                s.lock.release()

        threading.Thread(target=work, daemon=True).start()

        def gen():
            while True:
                item = q.get()
                if item is None:
                    break
                yield json.dumps(item) + "\n"

        return StreamingResponse(gen(), media_type="application/x-ndjson")

    @app.post("/sessions/{sid}/edit")
    async def do_edit(sid: str, request: Request):
        doc = await request.json()
        spec = EditSpec.from_json(doc)

        def runner(field, emit):
            out, report = edit(field, spec, callback=lambda row: emit(
                {"event": "iteration", **row, "mesh": "stale"}))
            return out

        return streaming_op(sid, runner)

    @app.post("/sessions/{sid}/semantic-edit")
    async def do_semantic(sid: str, request: Request):
        doc = await request.json()
        spec = EditSpec.from_json(doc)

        def runner(field, emit):
            out, report = semantic_edit(field, spec, callback=lambda row: emit(
                {"event": "iteration", **row, "mesh": "stale"}))
            return out

        return streaming_op(sid, runner)

    @app.post("/sessions/{sid}/smooth")
    async def do_smooth(sid: str, request: Request):
        doc = await request.json()
        try:
            config = FlowConfig(**{k: doc[k] for k in doc
                                   if k in FlowConfig.__dataclass_fields__})
        except TypeError as e:
            raise InvalidSpec(f"bad flow config: {e}") from None

        def runner(field, emit):
            out, trace = run_smoothing(field, config, callback=lambda row: emit(
                {"event": "iteration", **row, "mesh": "stale"}))
            return out

        return streaming_op(sid, runner)

    @app.post("/sessions/{sid}/rigid-edit")
    async def do_rigid(sid: str, request: Request):
        doc = await request.json()
        config = RigidConfig.from_json(doc)

        def runner(field, emit):
            out, ft, trace, dtheta = rigid_edit(field, config, callback=lambda row: emit(
                {"event": "step", **row}))
            return out

        return streaming_op(sid, runner)

    frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend.is_dir():
        app.mount("/app", StaticFiles(directory=str(frontend), html=True),
                  name="frontend")

    return app


def serve(host: str = "127.0.0.1", port: int = 8642, model_dir: str | None = None):
    import uvicorn
    uvicorn.run(create_app(model_dir=model_dir), host=host, port=port,
                log_level="warning")
