"""HTTP and WebSocket front door for the simulator.

The engine underneath is synchronous and guarded by per-session locks;
handlers call it directly (individual calls are microseconds) and only the
blocking event-queue reads hop to a worker thread. Every error leaves as
``{"error": {"code", "message", "path"}}`` with a meaningful status code so
clients never have to parse prose.
"""
from __future__ import annotations

import asyncio
import queue
from typing import Any, Optional

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .canonical import canonical_json
from .scenario import Scenario, ScenarioError, default_scenario, load_scenario
from .session import SessionApiError, SessionManager
from .tasks import TaskGraphError


def _error_body(code: str, message: str, path: str = "") -> dict[str, Any]:
    return {"error": {"code": code, "message": message, "path": path}}


def create_app(manager: Optional[SessionManager] = None,
               scenario: Optional[Scenario] = None) -> FastAPI:
    app = FastAPI(title="virtmill", docs_url=None, redoc_url=None)
    mgr = manager or SessionManager()
    base_scenario = scenario or default_scenario()

    @app.exception_handler(SessionApiError)
    async def _api_error(_req: Request, exc: SessionApiError) -> JSONResponse:
        return JSONResponse(status_code=exc.status,
                            content=_error_body(exc.code, exc.message, exc.path))

    @app.exception_handler(ScenarioError)
    async def _scenario_error(_req: Request, exc: ScenarioError) -> JSONResponse:
        return JSONResponse(status_code=422,
                            content=_error_body("SCENARIO_INVALID", exc.message, exc.path))

    @app.exception_handler(TaskGraphError)
    async def _graph_error(_req: Request, exc: TaskGraphError) -> JSONResponse:
        return JSONResponse(status_code=422,
                            content=_error_body(exc.code, str(exc), "$"))

    async def _body(request: Request) -> dict[str, Any]:
        if not await request.body():
            return {}
        try:
            doc = await request.json()
        except ValueError:
            raise SessionApiError("VALIDATION", "request body is not valid JSON",
                                  status=422, path="$") from None
        if not isinstance(doc, dict):
            raise SessionApiError("VALIDATION", "request body must be a JSON object",
                                  status=422, path="$")
        return doc

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request) -> dict[str, Any]:
        doc = await _body(request)
        mode = doc.get("mode", "free")
        sc = base_scenario
        if doc.get("scenario") is not None:
            if not isinstance(doc["scenario"], dict):
                raise SessionApiError("VALIDATION", "scenario must be an object",
                                      status=422, path="scenario")
            sc = load_scenario(doc["scenario"])
        session = mgr.create(sc, mode=mode)
        return {"session": session.id, "snapshot": session.snapshot()}

    @app.post("/sessions/{session_id}/actions")
    async def submit_action(session_id: str, request: Request) -> dict[str, Any]:
        doc = await _body(request)
        if "action" not in doc or not isinstance(doc["action"], dict):
            raise SessionApiError("VALIDATION", "body needs an action object",
                                  status=422, path="action")
        key = doc.get("idempotency_key")
        if key is not None and not isinstance(key, str):
            raise SessionApiError("VALIDATION", "idempotency_key must be a string",
                                  status=422, path="idempotency_key")
        session = mgr.get(session_id)
        result = session.submit(doc["action"], idempotency_key=key)
        return result.to_doc()

    @app.get("/sessions/{session_id}/state")
    async def get_state(session_id: str) -> dict[str, Any]:
        return mgr.get(session_id).snapshot()

    @app.get("/sessions/{session_id}/report")
    async def get_report(session_id: str) -> dict[str, Any]:
        return mgr.get(session_id).report()

    @app.get("/sessions/{session_id}/scenario")
    async def get_scenario(session_id: str) -> dict[str, Any]:
        return mgr.get(session_id).scenario.raw

    @app.delete("/sessions/{session_id}")
    async def delete_session(session_id: str) -> dict[str, Any]:
        session = mgr.abandon(session_id)
        return {"session": session.id, "status": session.status}

    @app.websocket("/sessions/{session_id}/events")
    async def events(ws: WebSocket, session_id: str, from_seq: int = 1) -> None:
        # ``from`` is taken as an alias since it reads better in URLs but is
        # a reserved word in Python.
        raw_from = ws.query_params.get("from")
        if raw_from is not None:
            try:
                from_seq = int(raw_from)
            except ValueError:
                await ws.close(code=4422)
                return
        await ws.accept()
        try:
            session = mgr.get(session_id)
            backlog, q = session.subscribe(from_seq)
        except SessionApiError as exc:
            await ws.send_text(canonical_json(_error_body(exc.code, exc.message, exc.path)))
            await ws.close(code=4404 if exc.status == 404 else 4422)
            return
        try:
            for doc in backlog:
                await ws.send_text(canonical_json(doc))

            async def pump() -> None:
                while True:
                    try:
                        doc = await asyncio.to_thread(q.get, True, 0.25)
                    except queue.Empty:
                        continue
                    await ws.send_text(canonical_json(doc))

            pump_task = asyncio.ensure_future(pump())
            recv_task = asyncio.ensure_future(ws.receive())
            _done, pending = await asyncio.wait(
                {pump_task, recv_task}, return_when=asyncio.FIRST_COMPLETED)
            for task in pending:
                task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            session.unsubscribe(q)

    return app
