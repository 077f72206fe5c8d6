"""Uniform random walks over a knowledge graph and packed token corpora.

A walk starts at a uniformly drawn entity and repeatedly takes a uniform
outgoing edge until it has taken ``l_max`` steps or hits a sink. Each step
is verbalized as a four-token sentence ``<head> <rel> <tail> .``; walk
paragraphs are joined by an end-of-sequence token and re-split into
fixed-length chunks for next-token training.

Every walk index gets its own seeded random stream, so parallel and serial
generation produce the same corpus after ordering by walk index.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .kg import KnowledgeGraph, Triple


@dataclass(frozen=True)
class Vocabulary:
    """Token id layout: entities [0, E), relations [E, E+R), then specials.

    The entity block is contiguous from 0 so a model's entity logits are a
    plain slice. PERIOD ends each three-token sentence, EOS separates walk
    paragraphs, PAD exists for alignment but never appears in packed chunks.
    """

    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]

    @classmethod
    def from_graph(cls, graph: KnowledgeGraph) -> "Vocabulary":
        return cls(graph.entities.names, graph.relations.names)

    @property
    def entity_count(self) -> int:
        return len(self.entity_names)

    @property
    def relation_count(self) -> int:
        return len(self.relation_names)

    @property
    def period_id(self) -> int:
        return self.entity_count + self.relation_count

    @property
    def eos_id(self) -> int:
        return self.period_id + 1

    @property
    def pad_id(self) -> int:
        return self.period_id + 2

    @property
    def size(self) -> int:
        return self.entity_count + self.relation_count + 3

    def entity_token(self, e: int) -> int:
        return e

    def relation_token(self, r: int) -> int:
        return self.entity_count + r

    def token_string(self, tok: int) -> str:
        if tok < self.entity_count:
            return f"<{self.entity_names[tok]}>"
        if tok < self.entity_count + self.relation_count:
            return f"<{self.relation_names[tok - self.entity_count]}>"
        return {self.period_id: ".", self.eos_id: "<eos>", self.pad_id: "<pad>"}[tok]

    def detokenize(self, tokens: Iterable[int]) -> str:
        return " ".join(self.token_string(t) for t in tokens)

    def digest(self) -> str:
        """Stable hash of the token table, recorded in corpus headers."""
        h = hashlib.sha256()
        h.update(json.dumps([self.entity_names, self.relation_names]).encode())
        return h.hexdigest()[:16]


@dataclass
class TokenCorpus:
    """Fixed-length token chunks plus the generation metadata header."""

    chunks: np.ndarray  # (n_chunks, t_chunk) int32
    meta: dict

    @property
    def n_chunks(self) -> int:
        return self.chunks.shape[0]

    @property
    def t_chunk(self) -> int:
        return self.chunks.shape[1]


def sample_walk(
    graph: KnowledgeGraph,
    l_max: int,
    rng: np.random.Generator,
    length_mode: str = "cap",
) -> list[Triple]:
    """One uniform random walk of at most l_max steps.

    The start entity is uniform over all entities, resampled while it has no
    outgoing edges. Each step picks uniformly among outgoing edges; reaching
    a sink ends the walk early. ``length_mode`` "cap" walks exactly l_max
    steps (sinks permitting); "uniform" first draws the target length
    uniformly from [1, l_max].
    """
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    if length_mode not in ("cap", "uniform"):
        raise ValueError(f"length_mode must be 'cap' or 'uniform', got {length_mode!r}")
    if all(graph.out_degree(e) == 0 for e in range(graph.entity_count)):
        raise DataError("graph has no edges; cannot sample walks")

    target = l_max if length_mode == "cap" else int(rng.integers(1, l_max + 1))
    while True:
        e = int(rng.integers(graph.entity_count))
        if graph.out_degree(e) > 0:
            break
    path: list[Triple] = []
    for _ in range(target):
        edges = graph.outgoing(e)
        if not edges:
            break
        r, t = edges[int(rng.integers(len(edges)))]
        path.append(Triple(e, r, t))
        e = t
    return path


def verbalize(path: Sequence[Triple], vocab: Vocabulary) -> list[int]:
    """Token paragraph for a walk: 4 tokens per step, shared entities repeated."""
    out: list[int] = []
    for h, r, t in path:
        out += [vocab.entity_token(h), vocab.relation_token(r), vocab.entity_token(t),
                vocab.period_id]
    return out


def pack_chunks(
    paragraphs: Iterable[Sequence[int]],
    t_chunk: int,
    vocab: Vocabulary,
    meta: dict | None = None,
) -> TokenCorpus:
    """Join paragraphs with EOS and split the stream into t_chunk windows.

    The incomplete final window is dropped, so chunks never contain PAD.
    """
    if t_chunk < 8:
        raise ValueError(f"t_chunk must be >= 8, got {t_chunk}")
    stream: list[int] = []
    for p in paragraphs:
        stream.extend(p)
        stream.append(vocab.eos_id)
    n = len(stream) // t_chunk
    arr = np.asarray(stream[: n * t_chunk], dtype=np.int32).reshape(n, t_chunk)
    header = {"t_chunk": t_chunk, "vocab_hash": vocab.digest()}
    header.update(meta or {})
    return TokenCorpus(arr, header)


def make_query_prompt(e1: int, r: int, vocab: Vocabulary) -> list[int]:
    """Two-token completion prompt for the query (e1, r)."""
    return [vocab.entity_token(e1), vocab.relation_token(r)]


def build_corpus(
    graph: KnowledgeGraph,
    vocab: Vocabulary,
    l_max: int,
    num_walks: int,
    t_chunk: int,
    seed: int,
    length_mode: str = "cap",
) -> TokenCorpus:
    """Sample num_walks walks and pack them; deterministic given the seed.

    Walk i draws from its own stream spawned as SeedSequence(seed, (i,)).
    """
    paragraphs = []
    for i in range(num_walks):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        paragraphs.append(verbalize(sample_walk(graph, l_max, rng, length_mode), vocab))
    meta = {"l_max": l_max, "seed": seed, "walk_count": num_walks, "length_mode": length_mode}
    return pack_chunks(paragraphs, t_chunk, vocab, meta)


def save_corpus(corpus: TokenCorpus, path: str | Path) -> None:
    """Corpus file: npz with the flat token array and a JSON header."""
    np.savez_compressed(
        path,
        tokens=corpus.chunks,
        header=np.frombuffer(json.dumps(corpus.meta).encode(), dtype=np.uint8),
    )


def load_corpus(path: str | Path) -> TokenCorpus:
    if not Path(path).exists():
        raise DataError(f"corpus file {path} not found")
    with np.load(path) as z:
        meta = json.loads(z["header"].tobytes().decode())
        return TokenCorpus(z["tokens"], meta)


def dump_text(corpus: TokenCorpus, vocab: Vocabulary, path: str | Path) -> None:
    """Human-readable dump: one sentence per line, <eos> lines between walks."""
    lines = []
    for chunk in corpus.chunks:
        sent: list[int] = []
        for tok in chunk:
            if tok == vocab.eos_id:
                if sent:
                    lines.append(vocab.detokenize(sent))
                    sent = []
                lines.append("<eos>")
            elif tok == vocab.period_id:
                sent.append(tok)
                lines.append(vocab.detokenize(sent))
                sent = []
            else:
                sent.append(tok)
        if sent:
            lines.append(vocab.detokenize(sent))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
