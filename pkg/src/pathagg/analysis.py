"""KL divergence, prediction accuracy, and comparison grids.

All divergences are natural-log KL of a reference distribution against the
model distribution; the model distribution is softmax-produced and hence
strictly positive, so every grid cell is finite. The answer index treats a
prediction as correct when it is any known tail for the query, built from
the train graph plus held-out triples.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dist import EntityDistribution
from .errors import DataError, NumericError
from .kg import KnowledgeGraph, Triple

log = logging.getLogger(__name__)

DistFn = Callable[[int, int], EntityDistribution]


def kl(p: np.ndarray | EntityDistribution, q: np.ndarray | EntityDistribution) -> float:
    """KL(p || q) in nats with the 0 ln 0 = 0 convention.

    Raises if p puts mass where q has none; q from a softmax never does.
    """
    pv = p.probs if isinstance(p, EntityDistribution) else np.asarray(p, dtype=np.float64)
    qv = q.probs if isinstance(q, EntityDistribution) else np.asarray(q, dtype=np.float64)
    if pv.shape != qv.shape:
        raise ValueError(f"support mismatch: {pv.shape} vs {qv.shape}")
    mask = pv > 0
    if np.any(qv[mask] == 0):
        raise NumericError("infinite divergence: p has mass where q is zero")
    return float(np.sum(pv[mask] * np.log(pv[mask] / qv[mask])))


class QueryAnswerIndex:
    """Map (head, relation) -> set of correct tails over train + held-out triples."""

    def __init__(self, graph: KnowledgeGraph, test_triples: Sequence[Triple],
                 valid_triples: Sequence[Triple] | None = None,
                 include_valid: bool = False):
        self.entity_count = graph.entity_count
        self._answers: dict[tuple[int, int], set[int]] = {}
        pools: list[Sequence[Triple]] = [sorted(graph.triples), test_triples]
        if include_valid and valid_triples:
            pools.append(valid_triples)
        for pool in pools:
            for h, r, t in pool:
                self._answers.setdefault((h, r), set()).add(t)

    def answers(self, e1: int, r: int) -> frozenset[int]:
        try:
            return frozenset(self._answers[(e1, r)])
        except KeyError:
            raise DataError(f"query ({e1}, {r}) has no known answers") from None

    def __contains__(self, query: tuple[int, int]) -> bool:
        return query in self._answers


def reference_dist(index: QueryAnswerIndex, e1: int, r: int) -> EntityDistribution:
    """Uniform over the query's correct answers, zero elsewhere."""
    answers = index.answers(e1, r)
    probs = np.zeros(index.entity_count)
    probs[sorted(answers)] = 1.0 / len(answers)
    return EntityDistribution(probs, "reference")


def uniform_dist(entity_count: int) -> EntityDistribution:
    """Uniform over all entities."""
    if entity_count < 1:
        raise ValueError("entity_count must be >= 1")
    return EntityDistribution(np.full(entity_count, 1.0 / entity_count), "uniform")


def accuracy(
    predictor: Callable[[int, int], int],
    test_triples: Sequence[Triple],
    index: QueryAnswerIndex,
) -> float:
    """Fraction of test triples whose predicted tail is a correct answer.

    Each test triple is scored once, even when several triples share a query.
    """
    if not test_triples:
        raise DataError("no test triples to evaluate")
    hits = 0
    cache: dict[tuple[int, int], int] = {}
    for h, r, _ in test_triples:
        if (h, r) not in cache:
            cache[(h, r)] = predictor(h, r)
        hits += int(cache[(h, r)] in index.answers(h, r))
    return hits / len(test_triples)


@dataclass
class KlGrid:
    """Mean-KL table: one row per model checkpoint, labeled reference columns."""

    row_lengths: list[int]
    columns: list[str]
    values: np.ndarray  # (rows, columns)
    raw: list[tuple[int, str, int, int, float]] = field(default_factory=list)
    # raw rows: (row_length, column, e1, r, kl)

    def cell(self, l_max: int, column: str) -> float:
        return float(self.values[self.row_lengths.index(l_max), self.columns.index(column)])

    def to_csv(self, path: str | Path, config_hash: str | None = None) -> None:
        Path(path).write_text(self.csv_text(config_hash), encoding="utf-8")

    def csv_text(self, config_hash: str | None = None) -> str:
        buf = io.StringIO()
        if config_hash:
            buf.write(f"# config_hash={config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l_max"] + self.columns)
        for i, l in enumerate(self.row_lengths):
            w.writerow([l] + [f"{v:.12g}" for v in self.values[i]])
        return buf.getvalue()

    def raw_csv_text(self, config_hash: str | None = None) -> str:
        buf = io.StringIO()
        if config_hash:
            buf.write(f"# config_hash={config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l_max", "column", "e1", "relation", "kl"])
        for row in self.raw:
            w.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.12g}"])
        return buf.getvalue()


def kl_grid(
    test_triples: Sequence[Triple],
    lm_dists: dict[int, DistFn],
    weighted_dists: dict[int, DistFn],
    unweighted_dists: dict[int, DistFn],
    index: QueryAnswerIndex,
    mean_mode: str = "per_triple",
) -> KlGrid:
    """Mean KL of each reference distribution against each model checkpoint.

    Rows are model checkpoints keyed by their training walk length; columns
    are the weighted and unweighted aggregations per rule length plus the
    correct-answer and uniform anchors. ``mean_mode`` "per_triple" averages
    over test triples (queries repeated per gold tail); "per_query" averages
    over distinct (e1, r) queries.
    """
    if not lm_dists:
        raise DataError("no model checkpoints supplied")
    if mean_mode not in ("per_triple", "per_query"):
        raise ValueError(f"mean_mode must be 'per_triple' or 'per_query', got {mean_mode!r}")

    queries = [(h, r) for h, r, _ in test_triples]
    if mean_mode == "per_query":
        queries = sorted(set(queries))

    columns: list[tuple[str, DistFn]] = []
    for n in sorted(weighted_dists):
        columns.append((f"weighted_n{n}", weighted_dists[n]))
    for n in sorted(unweighted_dists):
        columns.append((f"unweighted_n{n}", unweighted_dists[n]))
    columns.append(("reference", lambda e1, r: reference_dist(index, e1, r)))
    uni = uniform_dist(index.entity_count)
    columns.append(("uniform", lambda e1, r: uni))

    # reference columns do not depend on the checkpoint: compute once per query
    ref_cache: dict[str, list[np.ndarray]] = {}
    for name, fn in columns:
        ref_cache[name] = [fn(e1, r).probs for e1, r in queries]

    row_lengths = sorted(lm_dists)
    values = np.zeros((len(row_lengths), len(columns)))
    raw: list[tuple[int, str, int, int, float]] = []
    for i, l in enumerate(row_lengths):
        lm_cache = [lm_dists[l](e1, r).probs for e1, r in queries]
        for j, (name, _) in enumerate(columns):
            cell = []
            for (e1, r), ref, lmp in zip(queries, ref_cache[name], lm_cache):
                v = kl(ref, lmp)
                cell.append(v)
                raw.append((l, name, e1, r, v))
            values[i, j] = float(np.mean(cell))
    return KlGrid(row_lengths, [name for name, _ in columns], values, raw)


def render_grid_png(grid: KlGrid, path: str | Path) -> None:
    """Small raster of the grid; darker cells are smaller KL."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(grid.columns)),
                                    max(2, 0.5 * len(grid.row_lengths))))
    im = ax.imshow(-grid.values, cmap="gray", aspect="auto")
    ax.set_xticks(range(len(grid.columns)), grid.columns, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(grid.row_lengths)), [str(l) for l in grid.row_lengths], fontsize=7)
    ax.set_ylabel("training walk length")
    fig.colorbar(im, ax=ax, label="-KL")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@dataclass
class RuleLengthStats:
    per_relation: list[tuple[int, int, int]]  # (relation, argmax-support len, argmax-weight len)
    mean_support_length: float
    mean_weight_length: float

    def csv_text(self, config_hash: str | None = None) -> str:
        buf = io.StringIO()
        if config_hash:
            buf.write(f"# config_hash={config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["relation", "max_support_length", "max_weight_length"])
        for rel, sl, wl in self.per_relation:
            w.writerow([rel, sl, wl])
        w.writerow(["mean", f"{self.mean_support_length:.12g}", f"{self.mean_weight_length:.12g}"])
        return buf.getvalue()


def rule_length_stats(rule_sets: dict[int, "RuleSet"], rule_weights: dict[int, "RuleWeights"],
                      ) -> RuleLengthStats:
    """Per-relation length of the best-supported and heaviest rules.

    Ties resolve to the shortest rule, then lexicographic relations.
    Relations with empty rule sets are excluded with a warning.
    """
    per_relation = []
    for rel in sorted(rule_sets):
        rs = rule_sets[rel]
        if not rs.rules:
            log.warning("relation %d has an empty rule set; excluded from length stats", rel)
            continue
        by_support = max(rs.rules, key=lambda h: (rs.support[h], -len(h)))
        rw = rule_weights.get(rel)
        if rw is None or not rw.weights:
            log.warning("relation %d has no learned weights; excluded from length stats", rel)
            continue
        by_weight = max(rs.rules, key=lambda h: (rw.weight(h), -len(h)))
        per_relation.append((rel, len(by_support), len(by_weight)))
    if not per_relation:
        raise DataError("no relations with rules and weights")
    mean_s = float(np.mean([s for _, s, _ in per_relation]))
    mean_w = float(np.mean([w for _, _, w in per_relation]))
    return RuleLengthStats(per_relation, mean_s, mean_w)


@dataclass
class Prop1Report:
    entity_count: int
    rule_count: int
    trials: int
    violations: int
    min_slack: float
    max_slack: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def csv_row(self) -> list[str]:
        return [str(self.entity_count), str(self.rule_count), str(self.trials),
                str(self.violations), f"{self.min_slack:.12g}", f"{self.max_slack:.12g}"]


def prop1_check(
    entity_count: int,
    rule_count: int,
    trials: int,
    rng: np.random.Generator,
    tolerance: float = 1e-12,
) -> Prop1Report:
    """Numeric check of the log-sum bound on rule-decomposed distributions.

    Each trial samples a row-normalized conditional table over entities given
    rules and two rule distributions, forms both entity marginals, and checks
    that the entity-level KL never exceeds the rule-level KL (plus tolerance).
    """
    if entity_count < 2 or rule_count < 2:
        raise ValueError("entity_count and rule_count must both be >= 2")
    violations = 0
    min_slack = float("inf")
    max_slack = float("-inf")
    for _ in range(trials):
        table = rng.random((rule_count, entity_count)) + 1e-12
        table /= table.sum(axis=1, keepdims=True)
        pw = rng.random(rule_count) + 1e-12
        pw /= pw.sum()
        plm = rng.random(rule_count) + 1e-12
        plm /= plm.sum()
        rule_kl = kl(pw, plm)
        entity_kl = kl(pw @ table, plm @ table)
        slack = rule_kl - entity_kl
        min_slack = min(min_slack, slack)
        max_slack = max(max_slack, slack)
        if entity_kl > rule_kl + tolerance:
            violations += 1
    return Prop1Report(entity_count, rule_count, trials, violations, min_slack, max_slack)
