"""Rule mining, rule-following walk probabilities, and path aggregation.

A rule is a relation sequence ``[r_1, ..., r_n]``. Its probability from a
start entity is the total uniform-random-walk mass that reaches each end
entity along paths labeled exactly by the sequence, with per-step
probability ``1 / |C(e)|``. Candidate rules for a target relation are
mined by enumerating bounded labeled paths between the endpoint pairs of
that relation's train triples; rule weights come from a logistic
regression separating the target relation's triples from sampled triples
of other relations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dist import EntityDistribution, stable_softmax
from .errors import DataError
from .kg import KnowledgeGraph, Triple

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.01


@dataclass(frozen=True)
class Rule:
    relations: tuple[int, ...]

    def __post_init__(self):
        if len(self.relations) < 1:
            raise ValueError("a rule needs at least one relation")

    def __len__(self) -> int:
        return len(self.relations)


@dataclass
class RuleSet:
    relation: int
    rules: list[Rule]
    support: dict[Rule, int]
    n_max: int
    min_support: int

    def __post_init__(self):
        self.rules = sorted(self.rules, key=lambda h: (len(h), h.relations))

    def __len__(self) -> int:
        return len(self.rules)


@dataclass
class RuleWeights:
    relation: int
    weights: dict[Rule, float]
    diagnostics: dict = field(default_factory=dict)

    def weight(self, rule: Rule) -> float:
        return self.weights.get(rule, 0.0)


def rule_prob(
    graph: KnowledgeGraph,
    e0: int,
    rule: Rule,
    masked: Triple | None = None,
) -> dict[int, float]:
    """Mass over end entities of uniform walks from e0 labeled by the rule.

    Dynamic program: start with mass 1 at e0 and push it along every edge
    of the current relation, scaling by 1/|C(e)|. Mass failing to find an
    edge is lost, so the returned total is at most 1. ``masked`` hides one
    triple from the graph, including its contribution to |C(head)|.
    """
    mass = {e0: 1.0}
    for r in rule.relations:
        nxt: dict[int, float] = {}
        for e, p in mass.items():
            deg = graph.out_degree(e)
            if masked is not None and masked.head == e:
                deg -= 1
            if deg <= 0:
                continue
            share = p / deg
            for t in graph.tails(e, r):
                if masked is not None and masked == (e, r, t):
                    continue
                nxt[t] = nxt.get(t, 0.0) + share
        mass = nxt
        if not mass:
            break
    return mass


def enumerate_rule_prob(graph: KnowledgeGraph, e0: int, rule: Rule) -> dict[int, float]:
    """Brute-force oracle: sum the product of 1/|C| factors over every
    labeled path. Exponential; only for small graphs and short rules."""
    out: dict[int, float] = {}

    def walk(e: int, depth: int, p: float) -> None:
        if depth == len(rule.relations):
            out[e] = out.get(e, 0.0) + p
            return
        deg = graph.out_degree(e)
        for t in graph.tails(e, rule.relations[depth]):
            walk(t, depth + 1, p / deg)

    walk(e0, 0, 1.0)
    return out


def mine_rules(
    graph: KnowledgeGraph,
    relation: int,
    n_max: int,
    min_support: int = 1,
    per_pair_cap: int = 10_000,
    count_mode: str = "instances",
    include_target_rule: bool = False,
) -> RuleSet:
    """Collect relation sequences with more than ``min_support`` valid paths.

    For every train triple (e1, relation, e2), a bounded DFS enumerates all
    labeled paths e1 -> e2 of length <= n_max (at most ``per_pair_cap`` path
    expansions per pair, warning when truncated). ``count_mode`` "instances"
    counts every path occurrence; "pairs" counts each (endpoint pair, rule)
    once. The pure one-step rule [relation] is dropped unless
    ``include_target_rule`` is set, matching the leave-one-out convention of
    weight learning where its feature is identically zero.
    """
    if not 0 <= relation < graph.relation_count:
        raise IndexError(f"relation id {relation} out of range")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if count_mode not in ("instances", "pairs"):
        raise ValueError(f"count_mode must be 'instances' or 'pairs', got {count_mode!r}")

    counts: dict[tuple[int, ...], int] = {}
    truncated = 0
    pairs = [(h, t) for h, r, t in graph.triples if r == relation]
    for e1, e2 in sorted(pairs):
        budget = per_pair_cap
        pair_rules: set[tuple[int, ...]] = set()
        stack: list[tuple[int, tuple[int, ...]]] = [(e1, ())]
        while stack:
            e, seq = stack.pop()
            if budget <= 0:
                truncated += 1
                break
            budget -= 1
            if len(seq) >= n_max:
                continue
            for r, t in graph.outgoing(e):
                nseq = seq + (r,)
                if t == e2:
                    if count_mode == "instances":
                        counts[nseq] = counts.get(nseq, 0) + 1
                    else:
                        pair_rules.add(nseq)
                if len(nseq) < n_max:
                    stack.append((t, nseq))
        for seq in pair_rules:
            counts[seq] = counts.get(seq, 0) + 1
    if truncated:
        log.warning("rule mining truncated path enumeration for %d pairs (cap %d)",
                    truncated, per_pair_cap)

    rules, support = [], {}
    for seq, c in counts.items():
        if c <= min_support:
            continue
        if not include_target_rule and seq == (relation,):
            continue
        rule = Rule(seq)
        rules.append(rule)
        support[rule] = c
    return RuleSet(relation, rules, support, n_max, min_support)


def score(
    graph: KnowledgeGraph,
    weights: RuleWeights,
    e1: int,
    relation: int | None = None,
) -> dict[int, float]:
    """Weighted sum of rule probabilities; entities off every rule score 0."""
    total: dict[int, float] = {}
    for rule, w in weights.weights.items():
        if w == 0.0:
            continue
        for e2, p in rule_prob(graph, e1, rule).items():
            total[e2] = total.get(e2, 0.0) + w * p
    return total


def _softmax_dist(scores: dict[int, float], entity_count: int, temperature: float,
                  source: str) -> EntityDistribution:
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    logits = np.zeros(entity_count)
    for e, s in scores.items():
        logits[e] = s
    return EntityDistribution(stable_softmax(logits / temperature), source, temperature)


def weighted_dist(
    graph: KnowledgeGraph,
    weights: RuleWeights,
    e1: int,
    relation: int,
    temperature: float = DEFAULT_TEMPERATURE,
) -> EntityDistribution:
    """Temperature-rescaled softmax of the weighted rule scores."""
    return _softmax_dist(score(graph, weights, e1, relation), graph.entity_count,
                         temperature, "weighted")


def unweighted_dist(
    graph: KnowledgeGraph,
    rule_set: RuleSet,
    e1: int,
    relation: int | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> EntityDistribution:
    """Aggregation with every mined rule weighted 1."""
    ones = RuleWeights(rule_set.relation, {h: 1.0 for h in rule_set.rules})
    return _softmax_dist(score(graph, ones, e1, rule_set.relation), graph.entity_count,
                         temperature, "unweighted")


# -- weight learning ----------------------------------------------------


def logistic_loss(w: np.ndarray, feats: np.ndarray, labels: np.ndarray,
                  reg: float, penalty: str) -> float:
    """Regularized binary cross-entropy with p = sigma(features @ w)."""
    s = feats @ w
    nll = float(np.sum(np.logaddexp(0.0, s) - labels * s))
    if penalty == "l1":
        return nll + reg * float(np.sum(np.abs(w)))
    return nll + reg * float(np.sum(w * w))


def logistic_grad(w: np.ndarray, feats: np.ndarray, labels: np.ndarray,
                  reg: float, penalty: str) -> np.ndarray:
    s = feats @ w
    p = 1.0 / (1.0 + np.exp(-s))
    g = feats.T @ (p - labels)
    if penalty == "l1":
        return g + reg * np.sign(w)  # subgradient 0 at w=0
    return g + 2.0 * reg * w


def rule_features(
    graph: KnowledgeGraph,
    rule_set: RuleSet,
    triples: list[Triple],
    mask_positive_edge: bool = True,
) -> np.ndarray:
    """Feature matrix: rule probabilities of each triple's endpoint pair.

    For triples of the target relation the triple itself is hidden from the
    graph while computing its own features (leave-one-out), so a rule can
    never be supported by the very edge it is meant to predict.
    """
    feats = np.zeros((len(triples), len(rule_set.rules)))
    for i, trip in enumerate(triples):
        masked = trip if (mask_positive_edge and trip.relation == rule_set.relation
                          and graph.has_triple(trip)) else None
        for j, rule in enumerate(rule_set.rules):
            feats[i, j] = rule_prob(graph, trip.head, rule, masked=masked).get(trip.tail, 0.0)
    return feats


def learn_weights(
    graph: KnowledgeGraph,
    relation: int,
    rule_set: RuleSet,
    reg: float = 0.01,
    penalty: str = "l1",
    negatives_per_positive: int = 4,
    seed: int = 0,
    learning_rate: float = 0.1,
    max_iters: int = 5000,
    tol: float = 1e-10,
    mask_positive_edge: bool = True,
) -> RuleWeights:
    """Fit rule weights by full-batch gradient descent with step halving.

    Positives are the train triples of the target relation; negatives are
    sampled uniformly from triples of other relations. Starts at w = 0 and
    halves the step size whenever a step would not decrease the loss;
    returns the best iterate (with a warning) if the iteration cap is hit.
    """
    if penalty not in ("l1", "l2"):
        raise ValueError(f"penalty must be 'l1' or 'l2', got {penalty!r}")
    if reg < 0:
        raise ValueError(f"reg must be >= 0, got {reg}")
    if not rule_set.rules:
        raise DataError(f"empty rule set for relation {relation}; mine rules first")

    positives = sorted(t for t in graph.triples if t.relation == relation)
    others = sorted(t for t in graph.triples if t.relation != relation)
    if not positives:
        raise DataError(f"no train triples with relation {relation}")
    rng = np.random.default_rng(seed)
    n_neg = negatives_per_positive * len(positives)
    if others:
        idx = rng.choice(len(others), size=min(n_neg, len(others)), replace=len(others) < n_neg)
        negatives = [others[int(i)] for i in idx]
    else:
        negatives = []

    triples = positives + negatives
    labels = np.array([1.0] * len(positives) + [0.0] * len(negatives))
    feats = rule_features(graph, rule_set, triples, mask_positive_edge)

    w = np.zeros(len(rule_set.rules))
    loss = logistic_loss(w, feats, labels, reg, penalty)
    best_w, best_loss = w.copy(), loss
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        g = logistic_grad(w, feats, labels, reg, penalty)
        lr = learning_rate  # backtrack from the base step each iteration
        while True:
            cand = w - lr * g
            cand_loss = logistic_loss(cand, feats, labels, reg, penalty)
            if cand_loss < loss or lr < 1e-16:
                break
            lr *= 0.5
        if cand_loss >= loss:
            converged = True  # no descent direction left at the smallest step
            break
        w, drop, loss = cand, loss - cand_loss, cand_loss
        if loss < best_loss:
            best_w, best_loss = w.copy(), loss
        if drop < tol:
            converged = True
            break
    if not converged:
        log.warning("weight learning for relation %d hit the %d-iteration cap", relation, max_iters)
    diagnostics = {
        "converged": converged,
        "iterations": iters,
        "final_loss": best_loss,
        "n_positives": len(positives),
        "n_negatives": len(negatives),
    }
    return RuleWeights(relation, dict(zip(rule_set.rules, best_w.tolist())), diagnostics)


# -- serialization -------------------------------------------------------


def save_rule_set(rule_set: RuleSet, path: str | Path) -> None:
    payload = {
        "format": "rule-set-v1",
        "relation": rule_set.relation,
        "n_max": rule_set.n_max,
        "min_support": rule_set.min_support,
        "rules": [{"relations": list(h.relations), "support": rule_set.support[h]}
                  for h in rule_set.rules],
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_rule_set(path: str | Path) -> RuleSet:
    if not Path(path).exists():
        raise DataError(f"rule set file {path} not found")
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "rule-set-v1":
        raise DataError(f"{path}: not a rule set file")
    rules = [Rule(tuple(r["relations"])) for r in payload["rules"]]
    support = {h: r["support"] for h, r in zip(rules, payload["rules"])}
    return RuleSet(payload["relation"], rules, support, payload["n_max"], payload["min_support"])


def save_rule_weights(weights: RuleWeights, path: str | Path) -> None:
    payload = {
        "format": "rule-weights-v1",
        "relation": weights.relation,
        "weights": [{"relations": list(h.relations), "weight": w}
                    for h, w in sorted(weights.weights.items(),
                                       key=lambda kv: (len(kv[0]), kv[0].relations))],
        "diagnostics": weights.diagnostics,
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_rule_weights(path: str | Path) -> RuleWeights:
    if not Path(path).exists():
        raise DataError(f"rule weights file {path} not found")
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "rule-weights-v1":
        raise DataError(f"{path}: not a rule weights file")
    weights = {Rule(tuple(r["relations"])): r["weight"] for r in payload["weights"]}
    return RuleWeights(payload["relation"], weights, payload.get("diagnostics", {}))


def dump_features_csv(
    graph: KnowledgeGraph,
    rule_set: RuleSet,
    triples: list[Triple],
    labels: list[int],
    path: str | Path,
    mask_positive_edge: bool = True,
) -> None:
    """Feature matrix dump for external inspection of the learning problem."""
    feats = rule_features(graph, rule_set, triples, mask_positive_edge)
    header = ["head", "relation", "tail", "label"] + [
        "|".join(map(str, h.relations)) for h in rule_set.rules]
    lines = [",".join(header)]
    for trip, y, row in zip(triples, labels, feats):
        lines.append(",".join([str(trip.head), str(trip.relation), str(trip.tail), str(y)]
                              + [f"{v:.12g}" for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
