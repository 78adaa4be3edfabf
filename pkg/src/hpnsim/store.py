"""File-backed model repository, subnet composition, and run history.

On-disk layout under the repository root:

    index.json                     model index entries (id, name, version, hash)
    models/<hash>.hpn.json         one file per distinct net (content addressed)
    history/<stamp>-<label>.json   one file per stored run, append-only

Writes go through a temp file + rename and are serialised by an advisory
lock, so a failed put never corrupts the index; model files are written
before the index references them.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .dss import HistoryEntry, RunHistory, ScenarioResult, result_to_doc
from .errors import BadRequestError, ModelError, NotFoundError, ParseError
from .evolution import Event, EvolutionGraph, Phase, Terminal
from .model import (
    ConflictPolicy,
    HybridNet,
    Place,
    Transition,
    canonical_net_json,
    load_net,
    net_to_doc,
    require_valid,
    save_net,
)
from .rationals import parse_rat
from .scenario import load_scenario
from .semantics import Label


@dataclass(frozen=True)
class ModelInfo:
    id: str
    name: str
    version: int
    hash: str


class ModelRepository:
    """Single-writer, multi-reader repository rooted at a directory."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(exist_ok=True)
        (self.root / "history").mkdir(exist_ok=True)

    # -- locking ----------------------------------------------------------

    def _locked(self):
        return _RepoLock(self.root / ".lock")

    # -- model index ----------------------------------------------------------

    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _read_index(self) -> list[ModelInfo]:
        path = self._index_path()
        if not path.exists():
            return []
        doc = json.loads(path.read_text("utf-8"))
        return [ModelInfo(e["id"], e["name"], e["version"], e["hash"]) for e in doc]

    def _write_index(self, entries: list[ModelInfo]):
        doc = [
            {"id": e.id, "name": e.name, "version": e.version, "hash": e.hash}
            for e in entries
        ]
        _atomic_write(self._index_path(), json.dumps(doc, indent=2) + "\n")

    def put(self, net: HybridNet, name: str) -> str:
        """Store a valid net; returns its model id.

        Identical nets share one content-addressed file; each put still
        gets its own index entry (the version counts per name).
        """
        require_valid(net, "stored net")
        blob = save_net(net)
        digest = hashlib.sha256(canonical_net_json(net)).hexdigest()[:16]
        with self._locked():
            entries = self._read_index()
            model_path = self.root / "models" / f"{digest}.hpn.json"
            if not model_path.exists():
                _atomic_write(model_path, blob.decode("utf-8"))
            version = 1 + max((e.version for e in entries if e.name == name), default=0)
            model_id = f"m{len(entries) + 1:04d}"
            entries.append(ModelInfo(model_id, name, version, digest))
            self._write_index(entries)
        return model_id

    def get(self, model_id: str) -> HybridNet:
        info = self._info(model_id)
        path = self.root / "models" / f"{info.hash}.hpn.json"
        if not path.exists():
            raise NotFoundError(f"model file for {model_id} missing", subject=model_id)
        return load_net(path.read_bytes())

    def get_bytes(self, model_id: str) -> bytes:
        info = self._info(model_id)
        path = self.root / "models" / f"{info.hash}.hpn.json"
        if not path.exists():
            raise NotFoundError(f"model file for {model_id} missing", subject=model_id)
        return path.read_bytes()

    def _info(self, model_id: str) -> ModelInfo:
        for e in self._read_index():
            if e.id == model_id:
                return e
        raise NotFoundError(f"no model with id {model_id}", subject=model_id)

    def list_models(self) -> list[ModelInfo]:
        return self._read_index()

    # -- run history ----------------------------------------------------------

    def append_history(self, result: ScenarioResult) -> str:
        """Durably append a run; returns the history entry id."""
        stamp = time.time_ns()
        safe_label = "".join(c if c.isalnum() or c in "-_" else "-" for c in result.label)[:40]
        entry_id = f"{stamp:020d}-{safe_label or 'run'}"
        doc = result_to_doc(result)
        doc["storedAt"] = stamp
        with self._locked():
            _atomic_write(self.root / "history" / f"{entry_id}.json", json.dumps(doc, indent=2) + "\n")
        return entry_id

    def load_history(self) -> RunHistory:
        entries = []
        for path in sorted((self.root / "history").glob("*.json")):
            doc = json.loads(path.read_text("utf-8"))
            entries.append(
                HistoryEntry(
                    id=path.stem,
                    stored_at=str(doc.get("storedAt", "")),
                    result=result_from_doc(doc),
                )
            )
        return RunHistory(tuple(entries))

    def history_bytes(self, entry_id: str) -> bytes:
        path = self.root / "history" / f"{entry_id}.json"
        if not path.exists():
            raise NotFoundError(f"no history entry {entry_id}", subject=entry_id)
        return path.read_bytes()


class _RepoLock:
    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        self.fd = os.open(self.path, os.O_CREAT | os.O_RDWR)
        fcntl.flock(self.fd, fcntl.LOCK_EX)
        return self

    def __exit__(self, *exc):
        fcntl.flock(self.fd, fcntl.LOCK_UN)
        os.close(self.fd)
        return False


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, "utf-8")
    os.replace(tmp, path)


# -- composition ------------------------------------------------------------


@dataclass(frozen=True)
class FusionMap:
    """Node pairs to merge when composing two nets (a-node, b-node).

    Fused places must agree in kind and initial marking; fused transitions
    in kind and timing. ``policies`` re-declares conflict policies for fused
    places (composition drops the parents' policies there, since the merged
    place has a new competitor set). Policy place ids use the a-side name.
    """

    pairs: tuple[tuple[str, str], ...] = ()
    policies: tuple[ConflictPolicy, ...] = ()


def compose(a: HybridNet, b: HybridNet, fusion: FusionMap) -> HybridNet:
    """Merge two nets, identifying the fused node pairs.

    Non-fused ids are prefixed "a:" / "b:"; a fused pair takes the a-side
    id. The result must validate, otherwise a ModelError is raised (an
    uncovered conflict created by fusion must be re-declared via the
    fusion's policies).
    """
    fused_b = {}
    for a_id, b_id in fusion.pairs:
        if a_id not in set(a.places) | set(a.transitions):
            raise BadRequestError(f"fusion names unknown node {a_id} in first net", subject=a_id)
        if b_id not in set(b.places) | set(b.transitions):
            raise BadRequestError(f"fusion names unknown node {b_id} in second net", subject=b_id)
        if b_id in fused_b:
            raise BadRequestError(f"node {b_id} fused twice", subject=b_id)
        fused_b[b_id] = a_id

    def a_name(node_id):
        return f"a:{node_id}"

    def b_name(node_id):
        return a_name(fused_b[node_id]) if node_id in fused_b else f"b:{node_id}"

    places: dict[str, Place] = {}
    transitions: dict[str, Transition] = {}
    m0: dict[str, Fraction] = {}

    a_m0, b_m0 = a.initial_marking(), b.initial_marking()
    for p in a.places.values():
        places[a_name(p.id)] = Place(a_name(p.id), p.kind, p.name)
        m0[a_name(p.id)] = a_m0[p.id]
    for t in a.transitions.values():
        transitions[a_name(t.id)] = Transition(
            a_name(t.id), t.kind, t.delay, t.rate, t.role,
            {a_name(k): v for k, v in (t.set_rates or {}).items()} or None,
        )

    for p in b.places.values():
        new_id = b_name(p.id)
        if p.id in fused_b:
            twin_id = fused_b[p.id]
            if twin_id not in a.places:
                raise ModelError(
                    f"fusion pairs place {p.id} with a transition", subject=p.id
                )
            twin = a.places[twin_id]
            if twin.kind != p.kind:
                raise ModelError(
                    f"kind mismatch fusing places {twin_id}/{p.id}", subject=p.id
                )
            if a_m0[twin_id] != b_m0[p.id]:
                raise ModelError(
                    f"initial marking mismatch fusing places {twin_id}/{p.id}", subject=p.id
                )
        else:
            places[new_id] = Place(new_id, p.kind, p.name)
            m0[new_id] = b_m0[p.id]
    for t in b.transitions.values():
        new_id = b_name(t.id)
        if t.id in fused_b:
            twin_id = fused_b[t.id]
            if twin_id not in a.transitions:
                raise ModelError(
                    f"fusion pairs transition {t.id} with a place", subject=t.id
                )
            twin = a.transitions[twin_id]
            if twin.kind != t.kind or twin.delay != t.delay or twin.rate != t.rate:
                raise ModelError(
                    f"timing/kind mismatch fusing transitions {twin_id}/{t.id}", subject=t.id
                )
        else:
            transitions[new_id] = Transition(
                new_id, t.kind, t.delay, t.rate, t.role,
                {b_name(k): v for k, v in (t.set_rates or {}).items()} or None,
            )

    pre = {(a_name(p), a_name(t)): w for (p, t), w in a.pre.items()}
    post = {(a_name(t), a_name(p)): w for (t, p), w in a.post.items()}
    for (p, t), w in b.pre.items():
        key = (b_name(p), b_name(t))
        if key in pre and pre[key] != w:
            raise ModelError(f"arc weight clash at {key[0]}->{key[1]} during fusion")
        pre[key] = w
    for (t, p), w in b.post.items():
        key = (b_name(t), b_name(p))
        if key in post and post[key] != w:
            raise ModelError(f"arc weight clash at {key[0]}->{key[1]} during fusion")
        post[key] = w

    fused_a_places = {a_id for a_id, b_id in fusion.pairs if a_id in a.places}
    policies = [
        ConflictPolicy(a_name(pol.place), tuple({a_name(t): w for t, w in level.items()} for level in pol.levels))
        for pol in a.policies.values()
        if pol.place not in fused_a_places
    ]
    policies += [
        ConflictPolicy(b_name(pol.place), tuple({b_name(t): w for t, w in level.items()} for level in pol.levels))
        for pol in b.policies.values()
        if pol.place not in fused_b
    ]
    policies += [
        ConflictPolicy(a_name(pol.place), tuple({_fused_member(t, a, fused_b): w for t, w in level.items()} for level in pol.levels))
        for pol in fusion.policies
    ]

    net = HybridNet(places.values(), transitions.values(), pre, post, m0, policies)
    require_valid(net, "composed net")
    return net


def _fused_member(tid: str, a: HybridNet, fused_b: dict) -> str:
    # fusion policies name members by their a-side ids
    return f"a:{tid}"


# -- history deserialization ------------------------------------------------------------


def _frac(doc) -> Fraction | None:
    if doc is None:
        return None
    return Fraction(parse_rat(doc["frac"]))


def result_from_doc(doc: dict) -> ScenarioResult:
    from .dss import Accumulation
    from .scenario import save_scenario

    graph_doc = doc["graph"]
    phases = []
    for p in graph_doc["phases"]:
        phases.append(
            Phase(
                index=p["index"],
                start=_frac(p["start"]),
                duration=_frac(p["duration"]),
                discrete_marking=p["discreteMarking"],
                enabling=p["enabling"],
                speeds={t: parse_rat(v["frac"]) for t, v in p["speeds"].items()},
                balances={k: _frac(v) for k, v in p["balances"].items()},
                continuous_start={k: _frac(v) for k, v in p["continuousStart"].items()},
                labels={k: Label(v) for k, v in p["labels"].items()},
            )
        )
    events = [Event(_frac(e["time"]), e["kind"], e["subject"]) for e in graph_doc["events"]]
    term = graph_doc["terminal"]
    graph = EvolutionGraph(phases, events, Terminal(term["status"], _frac(term["time"]), term.get("detail")))
    scenario = load_scenario(json.dumps(doc["scenario"]))
    from .dss import Accumulation as Acc

    accumulation = tuple(
        Acc(a["place"], tuple(a["phases"]), _frac(a["maxBalance"]))
        for a in doc.get("accumulation", [])
    )
    return ScenarioResult(
        label=doc["label"],
        scenario=scenario,
        feasible=doc["feasible"],
        completion_time=_frac(doc.get("completionTime")),
        graph=graph,
        accumulation=accumulation,
    )
