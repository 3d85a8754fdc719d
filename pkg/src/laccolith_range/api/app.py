"""HTTP service exposing the range manager.

One manager instance lives for the whole app. Endpoints are thin: they
translate between JSON bodies and manager calls, and map the library's
exceptions onto HTTP status codes. The event feed is available both as a
polling endpoint and as a server-sent-event stream.
"""

from __future__ import annotations

import asyncio
import json
import os

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from ..config import GuestConfig
from ..detection import list_avs, load_av
from ..errors import (
    ChannelClosedError,
    GuestCrashedError,
    LaccolithError,
    UnknownEntityError,
)
from ..injection import InjectionParams, choose_region, find_linear_regions
from ..manager import RangeManager
from ..profiles import list_profiles, load_profile
from . import schemas

CONFIG_ENV = "LACCOLITH_RANGE_CONFIG"
DATA_ENV = "LACCOLITH_RANGE_DATA"

SSE_POLL_SECONDS = 0.2


def manager_from_env() -> RangeManager:
    config_path = os.environ.get(CONFIG_ENV)
    config = GuestConfig.from_file(config_path) if config_path else None
    data_dir = os.environ.get(DATA_ENV)
    return RangeManager(config=config, data_dir=data_dir)


def create_app(manager: RangeManager | None = None) -> FastAPI:
    app = FastAPI(title="laccolith-range", version="0.1.0")
    app.state.manager = manager if manager is not None else manager_from_env()
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def mgr() -> RangeManager:
        return app.state.manager

    @app.exception_handler(LaccolithError)
    async def _laccolith_error(request: Request, exc: LaccolithError):
        status = 400
        if isinstance(exc, UnknownEntityError):
            status = 404
        elif isinstance(exc, (GuestCrashedError, ChannelClosedError)):
            status = 409
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    # -- guests ---------------------------------------------------------------

    @app.get("/api/guests", response_model=list[schemas.GuestInfo])
    def get_guests():
        return [r.describe() for r in mgr().guests.values()]

    @app.post("/api/guests", response_model=schemas.GuestInfo)
    def post_guest(body: schemas.BootRequest):
        config = GuestConfig.from_fixture(body.config) if body.config else None
        record = mgr().boot(seed=body.seed, config=config, config_name=body.config)
        return record.describe()

    @app.get("/api/guests/{guest_id}", response_model=schemas.GuestInfo)
    def get_guest(guest_id: str):
        return mgr().guest_record(guest_id).describe()

    @app.post("/api/guests/{guest_id}/inject", response_model=schemas.InjectResponse)
    def post_inject(guest_id: str, body: schemas.InjectRequest):
        params = InjectionParams()
        if body.overwrite_seconds is not None:
            params.overwrite_seconds = body.overwrite_seconds
        if body.restore_seconds is not None:
            params.restore_seconds = body.restore_seconds
        if body.poll_interval is not None:
            params.poll_interval = body.poll_interval
        if body.timeout is not None:
            params.timeout = body.timeout
        params.region = body.region
        outcome, session = mgr().inject(guest_id, body.injection_time, params)
        return {
            "guest": guest_id,
            "agent": session.id if session else None,
            **outcome.to_dict(),
        }

    # -- agents ---------------------------------------------------------------

    @app.get("/api/agents", response_model=list[schemas.AgentInfo])
    def get_agents():
        return [s.describe() for s in mgr().agents.values()]

    @app.get("/api/agents/{agent_id}", response_model=schemas.AgentInfo)
    def get_agent(agent_id: str):
        return mgr().agent_session(agent_id).describe()

    @app.post("/api/agents/{agent_id}/command", response_model=schemas.CommandResponse)
    def post_command(agent_id: str, body: schemas.CommandRequest):
        return mgr().send_command(agent_id, body.command, body.args, body.exec_path)

    @app.get("/api/agents/{agent_id}/output")
    def get_output(agent_id: str, since: int = 0):
        history = mgr().agent_session(agent_id).history
        return {"agent": agent_id, "entries": history[since:], "next": len(history)}

    # -- operations -----------------------------------------------------------

    @app.get("/api/operations", response_model=list[schemas.OperationSummary])
    def get_operations():
        summaries = []
        for op in mgr().operations.values():
            doc = op.to_dict(include_actions=False)
            doc["detections"] = len(doc["detections"])
            summaries.append(doc)
        return summaries

    @app.post("/api/operations")
    def post_operation(body: schemas.OperationRequest):
        op = mgr().run_operation(
            body.profile,
            av_name=body.av,
            guest_id=body.guest,
            seed=body.seed,
            injection_time=body.injection_time,
        )
        return op.to_dict()

    @app.get("/api/operations/{op_id}")
    def get_operation(op_id: str):
        return mgr().operation_record(op_id).to_dict()

    @app.get("/api/facts")
    def get_facts(operation: str = Query(...)):
        op = mgr().operation_record(operation)
        return [
            {"name": f.name, "value": f.value, "step": f.step_id, "seq": f.seq}
            for f in op.facts.all()
        ]

    # -- metrics and reliability ----------------------------------------------

    @app.get("/api/metrics")
    def get_metrics():
        return mgr().metrics_summary()

    @app.post("/api/reliability")
    def post_reliability(body: schemas.ReliabilityRequest):
        if body.sweep or body.avs:
            reports = mgr().run_reliability_sweep(
                av_names=body.avs,
                trials=body.trials,
                injection_time=body.injection_time,
                base_seed=body.seed,
            )
            return {name: r.to_dict() for name, r in reports.items()}
        report = mgr().run_reliability(
            trials=body.trials,
            injection_time=body.injection_time,
            base_seed=body.seed,
            label=body.label,
        )
        return report.to_dict()

    @app.get("/api/reliability", response_model=list[schemas.ReliabilityRunOut])
    def get_reliability():
        return [
            {
                "label": r.label,
                "trials": r.trials,
                "injection_time": r.injection_time,
                "successes": r.successes,
                "metric": r.metric.to_dict(),
            }
            for r in mgr().reliability_reports
        ]

    # -- profiles, products, symbols -------------------------------------------

    @app.get("/api/profiles", response_model=list[schemas.ProfileInfo])
    def get_profiles():
        out = []
        for name in list_profiles():
            profile = load_profile(name)
            out.append(
                {
                    "name": profile.name,
                    "display_name": profile.display_name,
                    "description": profile.description,
                    "steps": len(profile.steps),
                    "commands": profile.commands_used,
                }
            )
        return out

    @app.get("/api/profiles/{name}")
    def get_profile(name: str):
        return load_profile(name).to_dict()

    @app.get("/api/avs", response_model=list[schemas.AvInfo])
    def get_avs():
        return [load_av(name).describe() for name in list_avs()]

    @app.get("/api/avs/{name}", response_model=schemas.AvInfo)
    def get_av(name: str):
        return load_av(name).describe()

    @app.get("/api/vmi", response_model=schemas.VmiInfo)
    def get_vmi():
        profile = mgr().symbol_profile()
        regions = {r.name for r in find_linear_regions(profile)}
        chosen = choose_region(profile, InjectionParams()).name if regions else ""
        return {
            "build_id": profile.build_id,
            "page_size": profile.page_size,
            "symbols": [
                {
                    "name": s.name,
                    "page_offset": s.page_offset,
                    "size": s.size,
                    "prefix": s.prefix.hex(),
                    "callees": list(s.callees),
                    "linear": s.name in regions,
                }
                for s in profile.symbols
            ],
            "chosen_region": chosen,
        }

    # -- event feed -------------------------------------------------------------

    @app.get("/api/events")
    async def get_events(since: int = 0, follow: bool = False):
        log = mgr().events
        if not follow:
            events = log.since(since)
            return {"events": events, "next": log.next_seq}

        async def stream():
            cursor = since
            idle = 0
            while True:
                events = log.since(cursor)
                for event in events:
                    cursor = event["seq"] + 1
                    yield f"id: {event['seq']}\ndata: {json.dumps(event)}\n\n"
                if events:
                    idle = 0
                else:
                    idle += 1
                    if idle % 25 == 0:
                        yield ": keep-alive\n\n"
                await asyncio.sleep(SSE_POLL_SECONDS)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # Optionally host the console bundle. API routes are registered first,
    # so the mount only catches paths the API does not claim.
    console_dir = os.environ.get("LACCOLITH_RANGE_CONSOLE", "")
    if console_dir and os.path.isdir(console_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
