"""De-novo benchmark, library baseline, fast 2D-then-3D search, checkpoint selection and splits."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chem import ChemError, parse_smiles, write_canonical_smiles
from .chem.embed import embed_conformers
from .io_utils import atomic_write_json, atomic_write_text
from .overlap import HIT_THRESHOLD, best_tc
from .pharmacophore import perceive
from .similarity import LibraryIndex, murcko_scaffold
from .voxel import GridSpec, voxelize

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (1.0, 1.1, 1.25, 1.5)
RAW_DRAW_FACTOR = 20


# --------------------------------------------------------------------------- generators


class ModelGenerator:
    """Adapter turning a captioning model into a SMILES generator."""

    def __init__(self, model, top_k=None, max_length=100):
        self.model = model
        self.top_k = top_k
        self.max_length = max_length

    def draw(self, grid, n, tau, rng):
        from .nn.model import SamplerConfig

        cfg = SamplerConfig(tau=tau, top_k=self.top_k, max_length=self.max_length)
        return self.model.sample(grid, n, cfg, rng)


class ReplayGenerator:
    """Emits a fixed SMILES stream regardless of the grid; for fixtures and dry runs."""

    def __init__(self, smiles):
        self.smiles = list(smiles)
        self.pos = 0

    def for_query(self):
        """A fresh cursor, so every query sees the stream from its start."""
        return ReplayGenerator(self.smiles)

    def draw(self, grid, n, tau, rng):
        out = []
        for _ in range(n):
            if self.pos >= len(self.smiles):
                break
            out.append(self.smiles[self.pos])
            self.pos += 1
        return out


@dataclass
class Candidate:
    smiles: str
    tau: float
    conformers: list = field(default_factory=list, repr=False)


@dataclass
class SamplePool:
    candidates: list
    raw_draws: int
    invalid: int
    duplicates: int
    exhausted: bool


def _validate(smiles, n_conformers, seed):
    """Canonical SMILES and conformers, or None when the string does not parse or embed."""
    try:
        mol = parse_smiles(smiles)
        canon = write_canonical_smiles(mol)
        confs = embed_conformers(mol, n=n_conformers, seed=seed) if n_conformers else []
    except (ChemError, RecursionError):
        return None
    return canon, confs


def collect_samples(generator, grid, budget, rng, schedule=DEFAULT_SCHEDULE, exclude=(), n_conformers=5,
                    seed=0, raw_factor=RAW_DRAW_FACTOR):
    """Draw until ``budget`` valid, non-duplicate molecules exist, or the raw-draw cap is hit.

    Every temperature receives the same raw-draw allowance and is drawn in
    equal rounds. The pool is ordered by ascending temperature and truncated to
    ``budget``. Molecules in ``exclude`` (canonical SMILES) never enter it.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if hasattr(generator, "for_query"):
        generator = generator.for_query()
    taus = sorted(schedule)
    cap = raw_factor * budget
    per_tau = cap // len(taus)
    chunk = max(1, math.ceil(budget / len(taus)))
    seen = set(exclude)
    pools = {t: [] for t in taus}
    drawn = {t: 0 for t in taus}
    invalid = duplicates = 0
    dry = set()
    while sum(len(p) for p in pools.values()) < budget:
        progressed = False
        for t in taus:
            n = min(chunk, per_tau - drawn[t])
            if n <= 0 or t in dry:
                continue
            batch = generator.draw(grid, n, t, rng)
            if len(batch) < n:
                dry.add(t)
            drawn[t] += len(batch)
            progressed = progressed or bool(batch)
            for smi in batch:
                got = _validate(smi, n_conformers, seed)
                if got is None:
                    invalid += 1
                    continue
                canon, confs = got
                if canon in seen:
                    duplicates += 1
                    continue
                seen.add(canon)
                pools[t].append(Candidate(canon, t, confs))
        if not progressed:
            break
    ordered = [c for t in taus for c in pools[t]]
    return SamplePool(ordered[:budget], sum(drawn.values()), invalid, duplicates, len(ordered) < budget)


# --------------------------------------------------------------------------- metrics


@dataclass
class QueryMetrics:
    hits: int
    unique_scaffold_hits: int
    max_combo: float
    n_scored: int

    @property
    def has_hit(self):
        return self.hits >= 1


def query_metrics(query_smiles, scored, threshold=HIT_THRESHOLD):
    """Hits, unique-scaffold hits and max combo over (canonical SMILES, combo) pairs.

    Entries identical to the query are dropped first. The max over an empty
    set is 0.0.
    """
    kept = [(s, c) for s, c in scored if s != query_smiles and c is not None]
    hits = [s for s, c in kept if c >= threshold]
    scaffolds = {murcko_scaffold(parse_smiles(s)) for s in hits}
    best = max((c for _, c in kept), default=0.0)
    return QueryMetrics(len(hits), len(scaffolds), float(best), len(kept))


def _summary(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {"median": None, "mean": None, "sd": None}
    return {"median": float(np.median(arr)), "mean": float(arr.mean()),
            "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0}


def aggregate(rows):
    """Median and mean/sd of hits, unique hits and max combo plus the count of queries with a hit."""
    return {
        "n_queries": len(rows),
        "hits": _summary([r["hits"] for r in rows]),
        "unique_scaffold_hits": _summary([r["unique_scaffold_hits"] for r in rows]),
        "max_combo": _summary([r["max_combo"] for r in rows]),
        "queries_with_hit": sum(1 for r in rows if r["hits"] >= 1),
    }


class ReportError(AssertionError):
    pass


def _require(cond, what):
    if not cond:
        raise ReportError(what)


def check_report(report):
    """Raise ReportError if a report violates one of its structural invariants."""
    rows = report["rows"]
    _require(report["aggregate"]["queries_with_hit"] == sum(1 for r in rows if r["hits"] >= 1),
             "queries_with_hit disagrees with the per-query rows")
    for r in rows:
        q = r["query_id"]
        _require(r["has_hit"] == (r["hits"] >= 1), f"{q}: has_hit flag")
        _require(0 <= r["unique_scaffold_hits"] <= r["hits"], f"{q}: unique scaffold hits exceed hits")
        _require(0.0 <= r["max_combo"] <= 2.0 + 1e-9, f"{q}: max combo outside [0, 2]")
        if "budget" in r:
            _require(r["n_scored"] <= r["budget"], f"{q}: scored more than the budget")
        if "comparisons" in r:
            _require(r["comparisons"] == r["comparisons_counted"], f"{q}: comparison accounting")
            _require(r["duplicate_analog_rate"] >= 1.0 or r["analog_picks"] == 0, f"{q}: duplicate-analog rate")
    agg = aggregate(rows)
    for key in ("hits", "unique_scaffold_hits", "max_combo"):
        _require(agg[key] == report["aggregate"][key], f"aggregate {key} not recomputable from rows")
    return True


def _pmap(fn, items, threads=1):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _query_id(q, k):
    return q.name or f"query{k}"


def _score(query_profile, conformer_lists, counter=None):
    return [None if b.combo is None else float(b.combo) for b in best_tc(query_profile, conformer_lists, counter=counter)]


# --------------------------------------------------------------------------- de novo


def run_denovo(generator, queries, budget, seed=0, spec: GridSpec = GridSpec(), schedule=DEFAULT_SCHEDULE,
               n_conformers=5, threshold=HIT_THRESHOLD, threads=1):
    """Generate ``budget`` molecules per query, score them in 3D and compute the four metrics."""
    if budget < 1:
        raise ValueError("budget must be >= 1")

    def one(k):
        q = queries[k]
        qsmi = write_canonical_smiles(q)
        qp = perceive(q)
        grid = voxelize(qp, spec, dtype=np.float32)
        rng = np.random.default_rng([seed, k])
        pool = collect_samples(generator, grid, budget, rng, schedule, exclude={qsmi},
                               n_conformers=n_conformers, seed=seed)
        combos = _score(qp, [c.conformers for c in pool.candidates])
        m = query_metrics(qsmi, [(c.smiles, s) for c, s in zip(pool.candidates, combos)], threshold)
        row = {"query_id": _query_id(q, k), "query_smiles": qsmi, "budget": budget,
               "n_generated": len(pool.candidates), "raw_draws": pool.raw_draws, "invalid": pool.invalid,
               "duplicates": pool.duplicates, "exhausted": pool.exhausted, "n_scored": m.n_scored,
               "hits": m.hits, "unique_scaffold_hits": m.unique_scaffold_hits, "max_combo": m.max_combo,
               "has_hit": m.has_hit}
        if pool.exhausted:
            log.warning("query %s: raw-draw cap reached with %d/%d molecules", row["query_id"],
                        len(pool.candidates), budget)
        cands = [{"query_id": row["query_id"], "rank": i, "tau": c.tau, "smiles": c.smiles, "combo": s,
                  "hit": s is not None and s >= threshold} for i, (c, s) in enumerate(zip(pool.candidates, combos))]
        return row, cands

    results = _pmap(one, range(len(queries)), threads)
    rows = [r for r, _ in results]
    return {"kind": "denovo", "rows": rows, "candidates": [c for _, cs in results for c in cs],
            "aggregate": aggregate(rows)}


def run_baseline(queries, library, per_query_sample, seed=0, threshold=HIT_THRESHOLD, threads=1):
    """Metric pipeline on uniformly drawn library molecules.

    ``library`` is a list of (canonical SMILES, conformer list) pairs.
    """
    if per_query_sample < 1:
        raise ValueError("per_query_sample must be >= 1")

    def one(k):
        q = queries[k]
        qsmi = write_canonical_smiles(q)
        rng = np.random.default_rng([seed, k])
        n = min(per_query_sample, len(library))
        picks = np.sort(rng.choice(len(library), size=n, replace=False)) if n else []
        chosen = [library[i] for i in picks]
        combos = _score(perceive(q), [confs for _, confs in chosen])
        m = query_metrics(qsmi, [(s, c) for (s, _), c in zip(chosen, combos)], threshold)
        return {"query_id": _query_id(q, k), "query_smiles": qsmi, "budget": per_query_sample,
                "n_generated": n, "n_scored": m.n_scored, "hits": m.hits,
                "unique_scaffold_hits": m.unique_scaffold_hits, "max_combo": m.max_combo, "has_hit": m.has_hit}

    rows = _pmap(one, range(len(queries)), threads)
    return {"kind": "baseline", "rows": rows, "aggregate": aggregate(rows)}


# --------------------------------------------------------------------------- fast search


def run_fast_search(generator, queries, index: LibraryIndex, n_g, n_a, seed=0, spec: GridSpec = GridSpec(),
                    schedule=DEFAULT_SCHEDULE, threshold=HIT_THRESHOLD, brute_force=False, threads=1):
    """Generated molecules -> n_a nearest 2D analogs each -> 3D scoring of the analogs' stored conformers.

    With ``brute_force`` the generator is bypassed and every indexed entry
    with conformers is scored.
    """
    if not brute_force and (n_g < 1 or n_a < 1):
        raise ValueError("n_g and n_a must be >= 1")

    def one(k):
        q = queries[k]
        qsmi = write_canonical_smiles(q)
        qp = perceive(q)
        rng = np.random.default_rng([seed, k])
        picks, top1, pair_src = [], [], []
        raw = 0
        exhausted = False
        n_gen = 0
        if brute_force:
            distinct = [int(i) for i in index.ids if index.conformers.get(int(i))]
        else:
            grid = voxelize(qp, spec, dtype=np.float32)
            pool = collect_samples(generator, grid, n_g, rng, schedule, exclude={qsmi}, n_conformers=0, seed=seed)
            raw, exhausted, n_gen = pool.raw_draws, pool.exhausted, len(pool.candidates)
            for gi, cand in enumerate(pool.candidates):
                analogs = index.top_k(parse_smiles(cand.smiles), n_a, exclude_smiles=cand.smiles)
                if analogs:
                    top1.append(analogs[0][1])
                for aid, sim in analogs:
                    picks.append(aid)
                    pair_src.append((gi, cand.smiles, aid, sim))
            distinct = list(dict.fromkeys(picks))
        counter = []
        confs = [index.conformers.get(aid, []) for aid in distinct]
        combos = _score(qp, confs, counter)
        by_id = dict(zip(distinct, combos))
        analog_smiles = [index.smiles[index.position(aid)] for aid in distinct]
        m = query_metrics(qsmi, list(zip(analog_smiles, combos)), threshold)
        scored = [aid for aid, c in zip(distinct, confs) if c]
        alpha = (len(counter) / len(scored)) if scored else 0.0
        row = {"query_id": _query_id(q, k), "query_smiles": qsmi, "mode": "brute_force" if brute_force else "generated",
               "n_g_requested": n_g, "n_g": n_gen, "n_a": n_a, "raw_draws": raw, "exhausted": exhausted,
               "analog_picks": len(picks), "distinct_analogs": len(distinct),
               "duplicate_analog_rate": (len(picks) / len(distinct)) if picks else 0.0,
               "alpha": alpha, "comparisons": int(round(alpha * len(scored))), "comparisons_counted": len(counter),
               "nominal_comparisons": alpha * n_gen * n_a,
               "top1_sim_median": float(np.median(top1)) if top1 else None,
               "n_scored": m.n_scored, "hits": m.hits, "unique_scaffold_hits": m.unique_scaffold_hits,
               "max_combo": m.max_combo, "has_hit": m.has_hit}
        pairs = [{"query_id": row["query_id"], "generated_id": f"{row['query_id']}:g{gi}", "generated_smiles": smi,
                  "analog_id": aid, "sim2d": sim, "combo3d": by_id[aid]} for gi, smi, aid, sim in pair_src]
        return row, pairs, top1

    results = _pmap(one, range(len(queries)), threads)
    rows = [r for r, _, _ in results]
    top1 = [s for _, _, t in results for s in t]
    report = {"kind": "fastsearch", "rows": rows, "pairs": [p for _, ps, _ in results for p in ps],
              "aggregate": aggregate(rows)}
    report["aggregate"].update({
        "comparisons_total": sum(r["comparisons"] for r in rows),
        "duplicate_analog_rate_mean": float(np.mean([r["duplicate_analog_rate"] for r in rows])) if rows else None,
        "top1_similarity": {**_summary(top1), "n": len(top1),
                            "quartiles": [float(x) for x in np.percentile(top1, [25, 50, 75])] if top1 else None},
        "pearson_sim2d_combo3d": pearson([p["sim2d"] for p in report["pairs"] if p["combo3d"] is not None],
                                         [p["combo3d"] for p in report["pairs"] if p["combo3d"] is not None]),
    })
    return report


def pearson(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.std(x) == 0 or np.std(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


# --------------------------------------------------------------------------- model selection and splits


def pick_checkpoint(totals):
    """``totals``: (epoch, total unique-scaffold hits) pairs. Highest total wins, earliest epoch on ties."""
    if not totals:
        raise ValueError("no checkpoints")
    return min(totals, key=lambda et: (-et[1], et[0]))[0]


def select_checkpoint(checkpoints, validation_queries, samples_per_query=100, seed=0, spec=None, **kwargs):
    """``checkpoints``: (epoch, model) pairs. Returns (chosen epoch, [(epoch, total), ...])."""
    totals = []
    for epoch, model in checkpoints:
        report = run_denovo(ModelGenerator(model), validation_queries, samples_per_query, seed=seed,
                            spec=spec or model.config.grid, **kwargs)
        totals.append((epoch, sum(r["unique_scaffold_hits"] for r in report["rows"])))
    return pick_checkpoint(totals), totals


def split_dataset(molecules, fractions=(0.8, 0.1, 0.1), seed=0):
    """Seeded train/validation/test split, disjoint at the canonical-SMILES level.

    Items may be SMILES strings or molecules; repeated structures land in the
    same split.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    groups = {}
    for item in molecules:
        key = write_canonical_smiles(parse_smiles(item) if isinstance(item, str) else item)
        groups.setdefault(key, []).append(item)
    keys = sorted(groups)
    rng = np.random.default_rng(seed)
    order = [keys[i] for i in rng.permutation(len(keys))]
    n = len(order)
    n_train = int(round(fractions[0] * n))
    n_val = min(n - n_train, int(round(fractions[1] * n)))
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple([m for key in part for m in groups[key]] for part in parts)


# --------------------------------------------------------------------------- report files


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _csv_text(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def write_report(report, out_dir, config=None, prefix=None):
    """Per-query CSV plus JSON aggregates (with config echo); extra CSVs for candidates and pairs.

    Returns the written paths by role.
    """
    prefix = prefix or report["kind"]
    paths = {"rows": os.path.join(out_dir, f"{prefix}.csv"), "summary": os.path.join(out_dir, f"{prefix}.json")}
    atomic_write_text(paths["rows"], _csv_text(report["rows"]))
    for extra in ("candidates", "pairs"):
        if report.get(extra):
            paths[extra] = os.path.join(out_dir, f"{prefix}_{extra}.csv")
            atomic_write_text(paths[extra], _csv_text(report[extra]))
    atomic_write_json(paths["summary"], {"kind": report["kind"], "aggregate": report["aggregate"],
                                         "config": config or {}, "rows": report["rows"]})
    return paths
