"""HTTP service exposing the engine, the search and the repository.

Endpoints (all JSON; request/response bodies mirror the file formats):

    POST /nets?name=...      store a net, returns {id, hash}
    GET  /nets               model index
    GET  /nets/{id}          the stored net document
    POST /simulate           {netId, scenario, horizon?, label?} -> evolution graph
    POST /search             {netId, scenario, mode?, horizon?, label?} -> trace + result
    GET  /history            stored runs (summary rows)
    GET  /history/{id}       one stored run
    POST /compose            {netA, netB, fusion, name?} -> composed net

Engine errors map to one ApiError body {code, message, subject} with
status 400 (badrequest), 404 (notfound) or 422 (validation, conflict,
nonconvergence). The evolution-graph bytes returned by /simulate are
exactly the CLI's output for the same inputs.
"""

from __future__ import annotations

import hashlib
import json

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .dss import attempts_to_doc, result_to_doc, run_scenario, search_first_feasible
from .errors import (
    BadRequestError,
    HpnError,
    NoFeasibleConfigurationError,
    NotFoundError,
)
from .evolution import graph_json_bytes
from .model import canonical_net_json, load_net, save_net
from .rationals import parse_rat
from .scenario import load_scenario, _parse_policy
from .store import FusionMap, ModelRepository, compose

_STATUS = {"badrequest": 400, "notfound": 404, "validation": 422, "conflict": 422, "nonconvergence": 422}


def create_app(repo_path: str = "hpn-repo") -> FastAPI:
    app = FastAPI(title="hpnsim", docs_url=None, redoc_url=None)
    repo = ModelRepository(repo_path)

    @app.exception_handler(HpnError)
    async def _hpn_error(_request: Request, exc: HpnError):
        body = {"code": exc.code, "message": str(exc), "subject": exc.subject}
        return JSONResponse(status_code=_STATUS.get(exc.code, 500), content=body)

    async def _body(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            raise BadRequestError("empty request body")
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BadRequestError(f"request body is not JSON: {exc}")
        if not isinstance(doc, dict):
            raise BadRequestError("request body must be an object")
        return doc

    def _load_scenario_field(doc: dict):
        if "scenario" not in doc:
            raise BadRequestError("missing 'scenario'")
        return load_scenario(json.dumps(doc["scenario"]))

    def _net_from(doc: dict):
        net_id = doc.get("netId")
        if not net_id:
            raise BadRequestError("missing 'netId'")
        return repo.get(net_id)

    @app.post("/nets")
    async def post_net(request: Request, name: str = "net"):
        raw = await request.body()
        net = load_net(raw)
        model_id = repo.put(net, name)
        digest = hashlib.sha256(canonical_net_json(net)).hexdigest()[:16]
        return JSONResponse(status_code=201, content={"id": model_id, "hash": digest})

    @app.get("/nets")
    async def list_nets():
        return [
            {"id": e.id, "name": e.name, "version": e.version, "hash": e.hash}
            for e in repo.list_models()
        ]

    @app.get("/nets/{model_id}")
    async def get_net(model_id: str):
        return Response(content=repo.get_bytes(model_id), media_type="application/json")

    @app.post("/simulate")
    async def simulate(request: Request):
        doc = await _body(request)
        net = _net_from(doc)
        sc = _load_scenario_field(doc)
        horizon = parse_rat(doc["horizon"]) if doc.get("horizon") else None
        result = run_scenario(net, sc, horizon=horizon, label=doc.get("label"))
        if doc.get("label"):
            repo.append_history(result)
        return Response(content=graph_json_bytes(result.graph), media_type="application/json")

    @app.post("/search")
    async def search(request: Request):
        doc = await _body(request)
        net = _net_from(doc)
        sc = _load_scenario_field(doc)
        mode = doc.get("mode", "heuristic")
        horizon = parse_rat(doc["horizon"]) if doc.get("horizon") else None
        try:
            result, trace = search_first_feasible(net, sc, mode=mode, horizon=horizon)
        except NoFeasibleConfigurationError as exc:
            body = {
                "feasible": False,
                "message": str(exc),
                "attempts": attempts_to_doc(exc.trace),
                "best": result_to_doc(exc.best) if exc.best else None,
            }
            if doc.get("label") and exc.best:
                repo.append_history(exc.best)
            return JSONResponse(content=body)
        if doc.get("label"):
            repo.append_history(result)
        return JSONResponse(
            content={
                "feasible": True,
                "attempts": attempts_to_doc(trace),
                "result": result_to_doc(result),
            }
        )

    @app.get("/history")
    async def history():
        entries = repo.load_history().entries
        return [
            {
                "id": e.id,
                "storedAt": e.stored_at,
                "label": e.result.label,
                "feasible": e.result.feasible,
                "completionTime": None
                if e.result.completion_time is None
                else {"frac": str(e.result.completion_time), "dec": float(e.result.completion_time)},
            }
            for e in entries
        ]

    @app.get("/history/{entry_id}")
    async def history_entry(entry_id: str):
        return Response(content=repo.history_bytes(entry_id), media_type="application/json")

    @app.post("/compose")
    async def compose_nets(request: Request):
        doc = await _body(request)
        for key in ("netA", "netB", "fusion"):
            if key not in doc:
                raise BadRequestError(f"missing '{key}'")
        net_a = repo.get(doc["netA"])
        net_b = repo.get(doc["netB"])
        fdoc = doc["fusion"]
        policies = tuple(
            _parse_policy(item, f"fusion.policies[{i}]")
            for i, item in enumerate(fdoc.get("policies", []))
        )
        fusion = FusionMap(
            pairs=tuple((p[0], p[1]) for p in fdoc.get("pairs", [])),
            policies=policies,
        )
        composed = compose(net_a, net_b, fusion)
        stored_id = repo.put(composed, doc["name"]) if doc.get("name") else None
        return {"id": stored_id, "net": json.loads(save_net(composed))}

    return app


def http_service(repo_path: str = "hpn-repo", host: str = "127.0.0.1", port: int = 8000):
    """Run the service until interrupted (blocking)."""
    import uvicorn

    uvicorn.run(create_app(repo_path), host=host, port=port)
