"""Command-line interface.

Subcommands: validate, simulate, search, compose, store (put/get/list/
history), serve. Outputs are JSON on stdout unless --out is given; the
evolution-graph JSON emitted by ``simulate`` is byte-identical to what the
HTTP service returns for the same inputs.

Exit codes: 0 success, 1 invalid input or infeasible outcome, 2 engine
error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .dss import attempts_to_doc, result_to_doc, search_first_feasible
from .errors import (
    HpnError,
    NoFeasibleConfigurationError,
    NonConvergenceError,
    UnresolvedConflictError,
)
from .evolution import evolve, graph_json_bytes, sample_trajectory_csv
from .model import load_net, net_to_doc, save_net, validate
from .rationals import parse_rat
from .scenario import load_scenario
from .store import FusionMap, ModelRepository, compose
from hpnsim.dss import run_scenario

EX_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EX_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hpnsim", description="hybrid Petri net simulation and scenario search")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a net file against the structural rules")
    p.add_argument("net")

    p = sub.add_parser("simulate", help="run one scenario and emit the evolution graph")
    p.add_argument("net")
    p.add_argument("scenario")
    p.add_argument("--horizon", default=None)
    p.add_argument("--sample-dt", default=None, help="emit a CSV trajectory sampled at this step instead of JSON")
    p.add_argument("--out", default=None)

    p = sub.add_parser("search", help="search priority configurations for the first feasible one")
    p.add_argument("net")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=("heuristic", "exhaustive"), default="heuristic")
    p.add_argument("--horizon", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("compose", help="fuse two nets into one")
    p.add_argument("net_a")
    p.add_argument("net_b")
    p.add_argument("--fusion", required=True, help="JSON file with pairs (and optional policies)")
    p.add_argument("--out", default=None)

    p = sub.add_parser("store", help="model repository and run history")
    store_sub = p.add_subparsers(dest="store_command", required=True)
    sp = store_sub.add_parser("put")
    sp.add_argument("net")
    sp.add_argument("--name", required=True)
    sp.add_argument("--repo", default=None)
    sp = store_sub.add_parser("get")
    sp.add_argument("id")
    sp.add_argument("--repo", default=None)
    sp.add_argument("--out", default=None)
    sp = store_sub.add_parser("list")
    sp.add_argument("--repo", default=None)
    sp = store_sub.add_parser("history")
    sp.add_argument("id", nargs="?", default=None)
    sp.add_argument("--repo", default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--repo", default=None)
    p.add_argument("--host", default="127.0.0.1")

    return parser


def _repo(path: str | None) -> ModelRepository:
    return ModelRepository(path or os.environ.get("HPN_REPO", "hpn-repo"))


def _emit(data: str | bytes, out: str | None):
    blob = data if isinstance(data, bytes) else data.encode("utf-8")
    if out:
        Path(out).write_bytes(blob)
    else:
        sys.stdout.buffer.write(blob)
        sys.stdout.buffer.flush()


def _read(path: str) -> bytes:
    p = Path(path)
    if not p.exists():
        raise HpnError(f"no such file: {path}", subject=path)
    return p.read_bytes()


def cli_main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except NoFeasibleConfigurationError as exc:
        doc = {
            "feasible": False,
            "message": str(exc),
            "attempts": attempts_to_doc(exc.trace),
            "best": result_to_doc(exc.best) if exc.best else None,
        }
        _emit(json.dumps(doc, indent=2) + "\n", getattr(args, "out", None))
        return 1
    except (NonConvergenceError, UnresolvedConflictError) as exc:
        _error(exc)
        return 2
    except HpnError as exc:
        _error(exc)
        return 1


def _error(exc: HpnError):
    doc = {"error": {"code": exc.code, "message": str(exc), "subject": exc.subject}}
    sys.stderr.write(json.dumps(doc) + "\n")


def _dispatch(args) -> int:
    if args.command == "validate":
        net = load_net(_read(args.net))
        report = validate(net)
        _emit(json.dumps({"valid": not report, "violations": [v.as_dict() for v in report]}, indent=2) + "\n", None)
        return 0 if not report else 1

    if args.command == "simulate":
        net = load_net(_read(args.net))
        sc = load_scenario(_read(args.scenario))
        horizon = parse_rat(args.horizon) if args.horizon else None
        result = run_scenario(net, sc, horizon=horizon)
        if args.sample_dt:
            _emit(sample_trajectory_csv(result.graph, parse_rat(args.sample_dt)), args.out)
        else:
            _emit(graph_json_bytes(result.graph), args.out)
        return 0 if result.feasible or sc.deadline is None else 1

    if args.command == "search":
        net = load_net(_read(args.net))
        sc = load_scenario(_read(args.scenario))
        horizon = parse_rat(args.horizon) if args.horizon else None
        result, trace = search_first_feasible(net, sc, mode=args.mode, horizon=horizon)
        doc = {
            "feasible": True,
            "attempts": attempts_to_doc(trace),
            "result": result_to_doc(result),
        }
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
        return 0

    if args.command == "compose":
        net_a = load_net(_read(args.net_a))
        net_b = load_net(_read(args.net_b))
        fusion_doc = json.loads(_read(args.fusion))
        from .scenario import _parse_policy

        policies = tuple(
            _parse_policy(item, f"fusion.policies[{i}]")
            for i, item in enumerate(fusion_doc.get("policies", []))
        )
        fusion = FusionMap(
            pairs=tuple((p[0], p[1]) for p in fusion_doc.get("pairs", [])),
            policies=policies,
        )
        composed = compose(net_a, net_b, fusion)
        _emit(save_net(composed), args.out)
        return 0

    if args.command == "store":
        repo = _repo(args.repo)
        if args.store_command == "put":
            net = load_net(_read(args.net))
            model_id = repo.put(net, args.name)
            _emit(json.dumps({"id": model_id}) + "\n", None)
            return 0
        if args.store_command == "get":
            _emit(repo.get_bytes(args.id), args.out)
            return 0
        if args.store_command == "list":
            entries = [
                {"id": e.id, "name": e.name, "version": e.version, "hash": e.hash}
                for e in repo.list_models()
            ]
            _emit(json.dumps(entries, indent=2) + "\n", None)
            return 0
        if args.store_command == "history":
            if args.id:
                _emit(repo.history_bytes(args.id), None)
            else:
                history = repo.load_history()
                rows = [
                    {
                        "id": e.id,
                        "label": e.result.label,
                        "feasible": e.result.feasible,
                        "completionTime": None
                        if e.result.completion_time is None
                        else str(e.result.completion_time),
                    }
                    for e in history.entries
                ]
                _emit(json.dumps(rows, indent=2) + "\n", None)
            return 0

    if args.command == "serve":
        from .service import http_service

        port = args.port or int(os.environ.get("HPN_PORT", "8000"))
        http_service(repo_path=args.repo or os.environ.get("HPN_REPO", "hpn-repo"),
                     host=args.host, port=port)
        return 0

    raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
