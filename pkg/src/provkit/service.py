"""HTTP service for interactive scenario answering.

Sketch containers are loaded into an in-memory registry (ids are derived
from the container checksum, which makes re-loading idempotent); the
answer path works off the registry alone and has no access to instance
files.  Requests are logged as JSON lines on stdout.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .container import answer_scenario, load
from .exceptions import ExtractionError, InputError, ProvisioningError
from .model import Scenario


class SketchRegistry:
    """Immutable-after-load sketch store; loads are serialized, reads are
    lock-free on plain dict lookups."""

    def __init__(self):
        self._entries: dict[str, dict] = {}
        self._by_checksum: dict[str, str] = {}
        self._lock = threading.Lock()

    def register(self, container_bytes: bytes, sketch_id: str | None = None) -> str:
        estimator, kind, parameters = load(container_bytes)
        doc = json.loads(container_bytes)
        checksum = doc["checksum"]
        with self._lock:
            if sketch_id is None:
                existing = self._by_checksum.get(checksum)
                if existing is not None:
                    return existing
                sketch_id = checksum.split(":", 1)[1][:12]
            current = self._entries.get(sketch_id)
            if current is not None:
                if current["checksum"] != checksum:
                    raise KeyError(sketch_id)  # caller maps to 409
                return sketch_id
            self._entries[sketch_id] = {
                "estimator": estimator,
                "kind": kind,
                "parameters": parameters,
                "checksum": checksum,
            }
            self._by_checksum[checksum] = sketch_id
        return sketch_id

    def get(self, sketch_id: str) -> dict | None:
        return self._entries.get(sketch_id)

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def metadata(self, sketch_id: str) -> dict:
        entry = self._entries[sketch_id]
        params = entry["parameters"]
        return {
            "sketchId": sketch_id,
            "kind": entry["kind"],
            "k": params.get("k"),
            "n": params.get("n"),
            "epsilon": params.get("epsilon"),
            "delta": params.get("delta"),
            "labels": params.get("labels"),
            "checksum": entry["checksum"],
        }


def create_app(sketch_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="provkit scenario service")
    registry = SketchRegistry()
    app.state.registry = registry

    if sketch_dir:
        for path in sorted(Path(sketch_dir).glob("*.json")):
            registry.register(path.read_bytes())

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        print(json.dumps({
            "method": request.method,
            "path": request.url.path,
            "status": response.status_code,
            "ms": round((time.perf_counter() - started) * 1000, 3),
        }, sort_keys=True), flush=True)
        return response

    @app.post("/sketches", status_code=201)
    async def post_sketch(body: dict):
        sketch_id = body.get("sketch_id")
        if "path" in body:
            try:
                raw = Path(body["path"]).read_bytes()
            except OSError as exc:
                raise HTTPException(400, f"cannot read {body['path']}: {exc}") from exc
        elif "format_version" in body:
            raw = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
        else:
            raise HTTPException(400, "body must be a container or {'path': ...}")
        try:
            sketch_id = registry.register(raw, sketch_id)
        except KeyError as exc:
            raise HTTPException(409, f"sketch id {exc.args[0]!r} exists with a different checksum") from exc
        except ProvisioningError as exc:
            raise HTTPException(400, str(exc)) from exc
        return {"sketchId": sketch_id, "metadata": registry.metadata(sketch_id)}

    @app.get("/sketches")
    async def list_sketches():
        return [registry.metadata(sketch_id) for sketch_id in registry.ids()]

    @app.get("/sketches/{sketch_id}")
    async def get_sketch(sketch_id: str):
        if registry.get(sketch_id) is None:
            raise HTTPException(404, f"unknown sketch {sketch_id!r}")
        return registry.metadata(sketch_id)

    @app.post("/sketches/{sketch_id}/answer")
    async def answer(sketch_id: str, body: dict):
        entry = registry.get(sketch_id)
        if entry is None:
            raise HTTPException(404, f"unknown sketch {sketch_id!r}")
        raw_scenario = body.get("scenario")
        if not isinstance(raw_scenario, list) or not raw_scenario:
            raise HTTPException(422, "scenario must be a non-empty list of 1-based indices")
        started = time.perf_counter()
        try:
            scenario = Scenario(raw_scenario)
            result = answer_scenario(entry["estimator"], entry["kind"], scenario,
                                     phi=body.get("phi"), rank_of=body.get("rankOf"))
        except (InputError, ExtractionError) as exc:
            raise HTTPException(422, str(exc)) from exc
        elapsed_ms = round((time.perf_counter() - started) * 1000, 3)
        return JSONResponse({"answer": result.to_dict(), "elapsed_ms": elapsed_ms})

    return app
