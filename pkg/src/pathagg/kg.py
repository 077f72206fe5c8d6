"""Knowledge graph loading, interning and adjacency.

Entities and relations are interned to dense integer ids in order of first
appearance in the train file, so loading the same files twice yields
identical id assignments. The central primitive is the outgoing edge list
``C(e)``: uniform random walks and rule probabilities both sample/score
over *edges*, not distinct neighbors, so parallel edges with different
relations each count.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import DataError

log = logging.getLogger(__name__)

INVERSE_SUFFIX = "_inv"


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class TripleParseError(DataError):
    def __init__(self, path: str, line_no: int, line: str):
        super().__init__(f"{path}:{line_no}: expected 'head<TAB>relation<TAB>tail', got {line!r}")
        self.line_no = line_no


class Interner:
    """Bidirectional string <-> dense id table; ids contiguous from 0."""

    def __init__(self, names: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        for n in names:
            self.intern(n)

    def intern(self, name: str) -> int:
        i = self._ids.get(name)
        if i is None:
            i = len(self._names)
            self._ids[name] = i
            self._names.append(name)
        return i

    def id_of(self, name: str) -> int | None:
        return self._ids.get(name)

    def name_of(self, i: int) -> str:
        return self._names[i]

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)


class KnowledgeGraph:
    """Immutable triple store with per-entity sorted outgoing edge lists."""

    def __init__(self, entities: Interner, relations: Interner, triples: Iterable[Triple]):
        self.entities = entities
        self.relations = relations
        self.triples: frozenset[Triple] = frozenset(triples)
        out: dict[int, list[tuple[int, int]]] = {}
        by_rel: dict[int, dict[int, list[int]]] = {}
        for h, r, t in self.triples:
            out.setdefault(h, []).append((r, t))
            by_rel.setdefault(h, {}).setdefault(r, []).append(t)
        self._outgoing: dict[int, tuple[tuple[int, int], ...]] = {
            e: tuple(sorted(edges)) for e, edges in out.items()
        }
        self._tails: dict[int, dict[int, tuple[int, ...]]] = {
            e: {r: tuple(sorted(ts)) for r, ts in rels.items()} for e, rels in by_rel.items()
        }

    @property
    def entity_count(self) -> int:
        return len(self.entities)

    @property
    def relation_count(self) -> int:
        return len(self.relations)

    @property
    def triple_count(self) -> int:
        return len(self.triples)

    def outgoing(self, e: int) -> tuple[tuple[int, int], ...]:
        """All outgoing (relation, tail) edges of entity e, sorted; C(e)."""
        self._check_entity(e)
        return self._outgoing.get(e, ())

    def out_degree(self, e: int) -> int:
        self._check_entity(e)
        return len(self._outgoing.get(e, ()))

    def tails(self, e: int, r: int) -> tuple[int, ...]:
        """Tails reachable from e via one edge labeled r (sorted)."""
        return self._tails.get(e, {}).get(r, ())

    def has_triple(self, t: Triple) -> bool:
        return t in self.triples

    def _check_entity(self, e: int) -> None:
        if not 0 <= e < self.entity_count:
            raise IndexError(f"entity id {e} out of range [0, {self.entity_count})")

    @classmethod
    def from_named_triples(cls, named: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        """Build a graph from (head, relation, tail) surface strings."""
        entities = Interner()
        relations = Interner()
        triples = []
        for h, r, t in named:
            triples.append(Triple(entities.intern(h), relations.intern(r), entities.intern(t)))
        return cls(entities, relations, triples)

    def named_triples(self) -> list[tuple[str, str, str]]:
        return sorted(
            (self.entities.name_of(h), self.relations.name_of(r), self.entities.name_of(t))
            for h, r, t in self.triples
        )

    # -- persistence ---------------------------------------------------

    def save(self, path: str | Path) -> None:
        """JSON snapshot: interned name tables plus id triples."""
        payload = {
            "format": "kg-snapshot-v1",
            "entities": list(self.entities.names),
            "relations": list(self.relations.names),
            "triples": sorted([h, r, t] for h, r, t in self.triples),
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeGraph":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "kg-snapshot-v1":
            raise DataError(f"{path}: not a kg snapshot")
        return cls(
            Interner(payload["entities"]),
            Interner(payload["relations"]),
            [Triple(*t) for t in payload["triples"]],
        )

    def write_vocab_tsv(self, path: str | Path) -> None:
        """TSV of the interned vocabulary: kind, id, surface string."""
        lines = [f"entity\t{i}\t{n}" for i, n in enumerate(self.entities.names)]
        lines += [f"relation\t{i}\t{n}" for i, n in enumerate(self.relations.names)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class DatasetSplit:
    """Train graph plus held-out triples sharing the train vocabulary."""

    train_graph: KnowledgeGraph
    test_triples: list[Triple]
    valid_triples: list[Triple] | None = None
    duplicate_train_count: int = 0
    dropped_eval_count: int = 0


def _parse_file(path: str | Path) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                parts = line.split()
            if len(parts) != 3 or not all(parts):
                raise TripleParseError(str(path), line_no, line.rstrip("\n"))
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def load_split(
    train_path: str | Path,
    test_path: str | Path,
    valid_path: str | Path | None = None,
    unknown_policy: str = "warn",
) -> DatasetSplit:
    """Load tab-separated triple files into an interned split.

    Ids are assigned by first appearance in the train file. Duplicate train
    triples are dropped with a counted warning. Eval triples whose entity or
    relation is absent from the train vocabulary are dropped (``warn``) or
    rejected (``error``); eval triples already present in the train graph are
    dropped so the split invariant holds.
    """
    if unknown_policy not in ("warn", "error"):
        raise ValueError(f"unknown_policy must be 'warn' or 'error', got {unknown_policy!r}")

    entities = Interner()
    relations = Interner()
    seen: set[Triple] = set()
    triples: list[Triple] = []
    dup = 0
    for h, r, t in _parse_file(train_path):
        trip = Triple(entities.intern(h), relations.intern(r), entities.intern(t))
        if trip in seen:
            dup += 1
            continue
        seen.add(trip)
        triples.append(trip)
    if dup:
        log.warning("%s: dropped %d duplicate train triples", train_path, dup)
    graph = KnowledgeGraph(entities, relations, triples)

    dropped = 0

    def read_eval(path: str | Path) -> list[Triple]:
        nonlocal dropped
        out = []
        for h, r, t in _parse_file(path):
            eh, er, et = entities.id_of(h), relations.id_of(r), entities.id_of(t)
            if eh is None or er is None or et is None:
                msg = f"{path}: triple ({h}, {r}, {t}) uses vocabulary absent from train"
                if unknown_policy == "error":
                    raise DataError(msg)
                log.warning("%s; dropped", msg)
                dropped += 1
                continue
            trip = Triple(eh, er, et)
            if graph.has_triple(trip):
                log.warning("%s: triple (%s, %s, %s) already in train; dropped", path, h, r, t)
                dropped += 1
                continue
            out.append(trip)
        return out

    test = read_eval(test_path)
    valid = read_eval(valid_path) if valid_path is not None else None
    return DatasetSplit(graph, test, valid, duplicate_train_count=dup, dropped_eval_count=dropped)


def add_inverse_relations(graph: KnowledgeGraph) -> KnowledgeGraph:
    """Add (t, r_inv, h) for every (h, r, t); idempotent.

    Inverse relations get fresh ids appended after the originals and surface
    names suffixed with ``_inv``. A graph that already contains inverse
    relations is returned unchanged.
    """
    if any(n.endswith(INVERSE_SUFFIX) for n in graph.relations.names):
        return graph
    relations = Interner(graph.relations.names)
    inv = {r: relations.intern(graph.relations.name_of(r) + INVERSE_SUFFIX)
           for r in range(graph.relation_count)}
    triples = set(graph.triples)
    triples.update(Triple(t, inv[r], h) for h, r, t in graph.triples)
    return KnowledgeGraph(Interner(graph.entities.names), relations, triples)
