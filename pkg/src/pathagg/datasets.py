"""Deterministic synthetic knowledge-graph datasets.

The original geography and biomedicine benchmark files are not
redistributable with this package, so these builders generate stand-ins
with the same vocabulary statistics and, more importantly, the same
structural signatures:

* the geography-style split has 227 entities and 2 relations, and every
  held-out query is answerable only through a three-step chain
  (neighbor -> its subregion -> that subregion's region);
* the biomedicine-style split has 135 entities and 49 relations, with a
  block of target relations that are compositions of two base relations,
  so held-out triples are recoverable by length-2 rules.

All generation is driven by a single seed and writes plain
``train.txt`` / ``valid.txt`` / ``test.txt`` triple files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

NamedTriple = tuple[str, str, str]


@dataclass
class GeneratedSplit:
    train: list[NamedTriple]
    valid: list[NamedTriple]
    test: list[NamedTriple]
    info: dict

    def write(self, out_dir: str | Path) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, rows in (("train", self.train), ("valid", self.valid), ("test", self.test)):
            p = out / f"{name}.txt"
            p.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows), encoding="utf-8")
            paths[name] = str(p)
        return paths


def make_countries(
    seed: int = 0,
    n_regions: int = 5,
    n_subregions: int = 23,
    n_countries: int = 199,
    n_test: int = 24,
    n_valid: int = 8,
    region_edge_dropout: float = 0.35,
) -> GeneratedSplit:
    """Geography-style split: locatedIn / neighborOf over a 3-level hierarchy.

    Held-out countries lose both of their locatedIn edges and each of their
    neighbor targets loses its direct region edge, so the held-out region is
    only reachable via neighborOf -> locatedIn -> locatedIn. neighborOf is
    directed (a ring plus a skip edge through each region, over
    subregion-interleaved member order), which keeps multi-hop neighbor
    fans small and spreads a held-out country's two neighbors over two
    subregions while their shared region accumulates both path shares.
    """
    rng = np.random.default_rng(seed)
    regions = [f"region_{i:02d}" for i in range(n_regions)]
    subregions = [f"subregion_{i:02d}" for i in range(n_subregions)]
    countries = [f"country_{i:03d}" for i in range(n_countries)]
    sub_region = {s: regions[i % n_regions] for i, s in enumerate(subregions)}
    country_sub = {c: subregions[i % n_subregions] for i, c in enumerate(countries)}
    country_region = {c: sub_region[country_sub[c]] for c in countries}
    by_region: dict[str, list[str]] = {r: [] for r in regions}
    for c in countries:
        by_region[country_region[c]].append(c)

    out_nb: dict[str, set[str]] = {c: set() for c in countries}
    # directed ring + skip through each region; members interleave
    # subregions, so both targets land in other subregions
    for members in by_region.values():
        k = len(members)
        for i in range(k):
            out_nb[members[i]].add(members[(i + 1) % k])
            out_nb[members[i]].add(members[(i + 3) % k])
    # a little cross-region noise
    for i in range(n_regions):
        a = str(rng.choice(by_region[regions[i]]))
        b = str(rng.choice(by_region[regions[(i + 1) % n_regions]]))
        out_nb[a].add(b)

    def eligible(c: str) -> bool:
        ns = out_nb[c]
        if len(ns) != 2:
            return False
        if any(country_region[n] != country_region[c] for n in ns):
            return False
        return len({country_sub[n] for n in ns}) >= 2

    candidates = [c for c in countries if eligible(c)]
    rng.shuffle(candidates)
    held: list[str] = []
    taken: set[str] = set()
    for c in candidates:
        if len(held) == n_test + n_valid:
            break
        # no held-out country may be a walk target of another held-out one
        if c in taken or out_nb[c] & taken or any(c in out_nb[h] for h in held):
            continue
        held.append(c)
        taken.add(c)
    if len(held) < n_test + n_valid:
        raise ValueError(
            f"only {len(held)} eligible held-out countries; lower n_test/n_valid or reseed")
    test_countries, valid_countries = held[:n_test], held[n_test : n_test + n_valid]

    train: list[NamedTriple] = []
    masked_region_edges = {c for h in held for c in out_nb[h]}
    for c in countries:
        if c in taken:
            continue  # held-out: both locatedIn edges removed
        train.append((c, "locatedIn", country_sub[c]))
        # direct region membership is incomplete, like a real KB; the gaps
        # also decorrelate the 2-step and 3-step region rules
        if c not in masked_region_edges and rng.random() >= region_edge_dropout:
            train.append((c, "locatedIn", country_region[c]))
    for s in subregions:
        train.append((s, "locatedIn", sub_region[s]))
    for c in countries:
        for n in sorted(out_nb[c]):
            train.append((c, "neighborOf", n))

    test = [(c, "locatedIn", country_region[c]) for c in test_countries]
    valid = [(c, "locatedIn", country_region[c]) for c in valid_countries]
    info = {
        "entities": n_regions + n_subregions + n_countries,
        "relations": 2,
        "test_countries": test_countries,
        "valid_countries": valid_countries,
    }
    return GeneratedSplit(train, valid, test, info)


def make_umls(
    seed: int = 0,
    n_types: int = 9,
    entities_per_type: int = 15,
    n_base: int = 30,
    n_composed: int = 19,
) -> GeneratedSplit:
    """Biomedicine-style split: typed base relations plus composed targets.

    Composed relation triples are exactly the two-step compositions of their
    base pair, thinned to 90%; held-out triples come from the composed block
    so length-2 rule mining can recover them.
    """
    rng = np.random.default_rng(seed)
    n_entities = n_types * entities_per_type
    ents = [f"concept_{i:03d}" for i in range(n_entities)]
    ent_type = {e: i // entities_per_type for i, e in enumerate(ents)}
    of_type = [ents[i * entities_per_type : (i + 1) * entities_per_type] for i in range(n_types)]

    base_names = [f"rel_{i:02d}" for i in range(n_base)]
    base_sig = {}
    for i, r in enumerate(base_names):
        src = i % n_types  # every type is a source, so every entity has out-edges
        dst = int(rng.integers(n_types))
        base_sig[r] = (src, dst)

    base_edges: dict[str, list[tuple[str, str]]] = {}
    for r in base_names:
        src, dst = base_sig[r]
        pairs = []
        for h in of_type[src]:
            n_out = 2 + int(rng.integers(0, 2))
            for t in rng.choice(of_type[dst], size=n_out, replace=False):
                pairs.append((h, str(t)))
        base_edges[r] = sorted(set(pairs))

    composed_names = [f"rel_{i:02d}" for i in range(n_base, n_base + n_composed)]
    composed_of: dict[str, tuple[str, str]] = {}
    train: list[NamedTriple] = [(h, r, t) for r in base_names for h, t in base_edges[r]]
    test: list[NamedTriple] = []
    valid: list[NamedTriple] = []
    for r in composed_names:
        for _ in range(200):
            ra = base_names[int(rng.integers(n_base))]
            rb_pool = [b for b in base_names if base_sig[b][0] == base_sig[ra][1]]
            if not rb_pool:
                continue
            rb = str(rng.choice(rb_pool))
            pairs = sorted({(h, t2) for h, t in base_edges[ra]
                            for t1, t2 in base_edges[rb] if t1 == t})
            if len(pairs) >= 12:
                break
        else:
            raise ValueError("could not find a composable base pair; reseed")
        composed_of[r] = (ra, rb)
        kept = [p for p in pairs if rng.random() < 0.9]
        rng.shuffle(kept)
        n_test = max(2, len(kept) // 8)
        n_val = max(1, len(kept) // 16)
        test += [(h, r, t) for h, t in kept[:n_test]]
        valid += [(h, r, t) for h, t in kept[n_test : n_test + n_val]]
        train += [(h, r, t) for h, t in kept[n_test + n_val :]]

    info = {
        "entities": n_entities,
        "relations": n_base + n_composed,
        "composed_of": composed_of,
    }
    return GeneratedSplit(train, valid, test, info)


def make_kinship(
    seed: int = 0,
    n_entities: int = 104,
    n_relations: int = 26,
    n_train: int = 2000,
    n_test: int = 200,
) -> GeneratedSplit:
    """Small dense random KG with kinship-scale vocabulary statistics."""
    rng = np.random.default_rng(seed)
    ents = [f"person_{i:03d}" for i in range(n_entities)]
    rels = [f"kin_{i:02d}" for i in range(n_relations)]
    seen: set[NamedTriple] = set()
    rows: list[NamedTriple] = []
    # guarantee every entity and relation occurs in train
    for i in range(max(n_entities, n_relations)):
        h = ents[i % n_entities]
        r = rels[i % n_relations]
        t = str(rng.choice(ents))
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            rows.append((h, r, t))
    while len(rows) < n_train + n_test:
        trip = (str(rng.choice(ents)), str(rng.choice(rels)), str(rng.choice(ents)))
        if trip not in seen:
            seen.add(trip)
            rows.append(trip)
    train, test = rows[:n_train], rows[n_train:]
    return GeneratedSplit(train, [], test, {"entities": n_entities, "relations": n_relations})
