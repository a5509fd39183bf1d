"""``pharmvox`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 input or configuration error, 2 internal error.
Option values resolve as built-in default < ``--config`` JSON < explicit flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__

log = logging.getLogger("pharmvox")


class InputError(Exception):
    """Bad user input: reported on stderr, exit code 1."""


class _Parser(argparse.ArgumentParser):
    intermixed = False  # set on subcommand parsers so positionals may follow options

    def error(self, message):
        raise InputError(f"{self.prog}: {message}")

    def parse_known_args(self, args=None, namespace=None):
        if not self.intermixed or getattr(self, "_mixing", False):
            return super().parse_known_args(args, namespace)
        # the intermixed parser calls back into parse_known_args; guard against recursion
        self._mixing = True
        try:
            return self.parse_known_intermixed_args(args, namespace)
        finally:
            self._mixing = False


# --------------------------------------------------------------------------- option registry


class Command:
    def __init__(self, name, help, run):
        self.name = name
        self.help = help
        self.run = run
        self.defaults = {}
        self.options = []

    def positional(self, name, help="", **kw):
        self.defaults[name] = None
        self.options.append((name, name, help, kw))
        return self

    def opt(self, flag, default=None, help="", **kw):
        dest = flag.lstrip("-").replace("-", "_")
        self.defaults[dest] = default
        self.options.append((flag, dest, help, kw))
        return self

    def install(self, sub):
        p = sub.add_parser(self.name, help=self.help, description=self.help)
        p.intermixed = True
        for flag, dest, help_text, kw in self.options:
            if not flag.startswith("-"):
                p.add_argument(dest, help=help_text, **kw)
                continue
            default = self.defaults[dest]
            shown = f" (default: {default})" if default is not None else ""
            p.add_argument(flag, dest=dest, default=None, help=help_text + shown, **kw)
        _global_flags(p)
        p.set_defaults(command=self)
        return p


def _global_flags(p):
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=None, help="random seed for every stochastic step (default: 0)")
    g.add_argument("--threads", type=int, default=None,
                   help="parallel map width for scoring; 1 is fully deterministic (default: 1)")
    g.add_argument("--config", default=None, help="JSON file of option values; explicit flags override it")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


GLOBAL_DEFAULTS = {"seed": 0, "threads": 1}


def resolve(cmd: Command, args):
    """Merge defaults, config file and explicit flags; unknown config keys are rejected."""
    allowed = dict(GLOBAL_DEFAULTS, **cmd.defaults)
    resolved = dict(allowed)
    if args.config:
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(conf, dict):
            raise InputError("config must be a JSON object")
        unknown = sorted(set(conf) - set(allowed))
        if unknown:
            raise InputError(f"unknown config keys for '{cmd.name}': {', '.join(unknown)}")
        resolved.update(conf)
    for key in allowed:
        val = getattr(args, key, None)
        if val is not None and val != []:
            resolved[key] = val
    return resolved


def _echo(cfg, out_dir, name):
    from .io_utils import atomic_write_json

    atomic_write_json(os.path.join(out_dir, "config.json"), {"command": name, "version": __version__, **cfg})


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise InputError(f"missing required option --{k.replace('_', '-')}")


# --------------------------------------------------------------------------- input helpers


def _read_lines(path):
    if path in (None, "-"):
        return sys.stdin.read().splitlines()
    try:
        with open(path) as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _smiles_records(path):
    """(SMILES, name) pairs from a .smi file: SMILES first, optional name after whitespace."""
    out = []
    for k, line in enumerate(_read_lines(path)):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        out.append((parts[0], parts[1].strip() if len(parts) > 1 else f"mol{k + 1}"))
    return out


def _read_sdf(path):
    from .chem.sdf import read_sdf

    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    return read_sdf(path)


def _molecules_3d(path, seed=0):
    """Molecules with coordinates from an SDF, or embedded from a SMILES file."""
    if path.lower().endswith((".sdf", ".mol", ".sd")):
        return _read_sdf(path)
    from .chem import parse_smiles
    from .chem.embed import embed_3d

    mols = []
    for smi, name in _smiles_records(path):
        mols.append(embed_3d(parse_smiles(smi, name=name), seed=seed))
    return mols


def _grid_spec(cfg):
    from .voxel import PRESETS, GridSpec

    if cfg.get("grid_preset"):
        if cfg["grid_preset"] not in PRESETS:
            raise InputError(f"unknown grid preset {cfg['grid_preset']!r}; choose from {sorted(PRESETS)}")
        return PRESETS[cfg["grid_preset"]]
    return GridSpec(int(cfg["grid_size"]), float(cfg["resolution"]), float(cfg["radius"]))


def _grid_opts(cmd):
    cmd.opt("--grid-preset", None, "named grid spec (desk, paper48, paper64); overrides size/resolution")
    cmd.opt("--grid-size", 32, "voxels per axis", type=int)
    cmd.opt("--resolution", 0.5, "voxel edge in angstrom", type=float)
    cmd.opt("--radius", 1.0, "point radius r in the occupancy Gaussian", type=float)


def _generator(cfg):
    from .workflows import ModelGenerator, ReplayGenerator

    if cfg.get("replay"):
        return ReplayGenerator(s for s, _ in _smiles_records(cfg["replay"])), None
    _need(cfg, "checkpoint")
    from .nn.checkpoint import load_checkpoint

    model, _ = load_checkpoint(cfg["checkpoint"])
    return ModelGenerator(model, top_k=cfg.get("top_k"), max_length=cfg["max_length"]), model


def _schedule(text):
    try:
        vals = tuple(float(x) for x in str(text).split(","))
    except ValueError as exc:
        raise InputError(f"bad tau schedule {text!r}") from exc
    if not vals or any(v < 1.0 for v in vals):
        raise InputError("tau schedule values must be >= 1")
    return vals


def _write_csv(path, rows):
    from .io_utils import atomic_write_text
    from .workflows import _csv_text

    text = _csv_text(rows)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


# --------------------------------------------------------------------------- commands


def cmd_canon(cfg):
    from .chem import ChemError, parse_smiles, write_canonical_smiles

    items = cfg["smiles"] or [ln for ln in _read_lines(cfg["input"]) if ln.strip()]
    failed = 0
    for item in items:
        parts = item.split(None, 1)
        try:
            canon = write_canonical_smiles(parse_smiles(parts[0]))
        except ChemError as exc:
            print(f"error: {parts[0]}: {exc}", file=sys.stderr)
            failed += 1
            continue
        print(canon if len(parts) == 1 else f"{canon}\t{parts[1]}")
    return 1 if failed else 0


def cmd_tokenize(cfg):
    from .chem.tokenizer import Vocabulary, build_vocabulary, split_tokens, tokenize

    items = cfg["smiles"] or [ln.split(None, 1)[0] for ln in _read_lines(cfg["input"]) if ln.strip()]
    if cfg["build_vocab"]:
        from .io_utils import atomic_write_text

        vocab = build_vocabulary(items)
        atomic_write_text(cfg["build_vocab"], vocab.to_json())
        print(f"vocabulary of {len(vocab)} entries, hash {vocab.digest()}", file=sys.stderr)
        return 0
    if cfg["vocab"]:
        with open(cfg["vocab"]) as fh:
            vocab = Vocabulary.from_json(fh.read())
        for s in items:
            seq = tokenize(s, vocab)
            print(" ".join(str(i) for i in seq.ids) + ("\t# contains <unk>" if seq.has_unk else ""))
        return 0
    status = 0
    for s in items:
        toks = split_tokens(s)
        if any(kind is None for kind, _ in toks):
            status = 1
        print(" ".join(t if kind is not None else f"<unk:{t}>" for kind, t in toks))
    return status


def cmd_embed(cfg):
    from .chem import ChemError, parse_smiles
    from .chem.embed import embed_conformers
    from .chem.sdf import write_sdf

    _need(cfg, "input", "out")
    out, failed = [], 0
    for smi, name in _smiles_records(cfg["input"]):
        try:
            confs = embed_conformers(parse_smiles(smi, name=name), n=cfg["conformers"], seed=cfg["seed"])
        except ChemError as exc:
            print(f"error: {name}: {exc}", file=sys.stderr)
            failed += 1
            continue
        out.extend(c.with_name(name) for c in confs)
    write_sdf(out, cfg["out"])
    print(f"wrote {len(out)} conformers, {failed} failures", file=sys.stderr)
    return 1 if failed else 0


def cmd_perceive(cfg):
    from .io_utils import atomic_write_json
    from .pharmacophore import CHANNELS, perceive

    _need(cfg, "input")
    mols = _molecules_3d(cfg["input"], cfg["seed"])
    data = [{"name": m.name, **perceive(m).to_dict()} for m in mols]
    if cfg["out"]:
        atomic_write_json(cfg["out"], data)
    else:
        for d, m in zip(data, mols):
            counts = ", ".join(f"{c}={len(d[c])}" for c in CHANNELS)
            print(f"{m.name}\t{counts}")
    return 0


def cmd_voxelize(cfg):
    from .pharmacophore import perceive
    from .voxel import CoverageError, save_grid, voxelize

    _need(cfg, "input", "out_dir")
    spec = _grid_spec(cfg)
    status = 0
    for k, m in enumerate(_molecules_3d(cfg["input"], cfg["seed"])):
        name = m.name or f"mol{k + 1}"
        try:
            grid = voxelize(perceive(m), spec, dtype=np.float32)
        except CoverageError as exc:
            print(f"error: {name}: {exc}", file=sys.stderr)
            status = 1
            continue
        save_grid(grid, os.path.join(cfg["out_dir"], f"{name}.voxg"))
    _echo(cfg, cfg["out_dir"], "voxelize")
    return status


def _group_conformers(mols):
    groups = []
    for m in mols:
        if groups and groups[-1][0] == m.name and m.name:
            groups[-1][1].append(m)
        else:
            groups.append((m.name, [m]))
    return groups


def cmd_score(cfg):
    from .overlap import HIT_THRESHOLD, score_profiles
    from .pharmacophore import perceive

    _need(cfg, "query", "cands")
    queries = _read_sdf(cfg["query"])
    if not queries:
        raise InputError("query file holds no molecules")
    qp = perceive(queries[0])
    rows = []
    for k, (name, confs) in enumerate(_group_conformers(_read_sdf(cfg["cands"]))):
        best, best_j = None, None
        for j, c in enumerate(confs):
            s = score_profiles(qp, perceive(c))
            if best is None or s.combo > best.combo:
                best, best_j = s, j
        rows.append({"query_id": queries[0].name or "query", "candidate_id": name or f"cand{k + 1}",
                     "conformer": best_j, "n_conformers": len(confs), "shape": best.shape_tanimoto,
                     "color": best.color_tanimoto, "combo": best.combo, "is_hit": best.combo >= HIT_THRESHOLD})
    _write_csv(cfg["out"], rows)
    return 0


def cmd_index(cfg):
    from .chem import parse_smiles
    from .similarity import LibraryIndex

    action, *smiles = cfg["action"]
    if action not in ("build", "query"):
        raise InputError(f"index action must be 'build' or 'query', got {action!r}")
    if action == "build":
        if smiles:
            raise InputError("index build takes no positional SMILES")
        _need(cfg, "smiles_file", "index")
        from .chem.embed import embed_conformers

        records = _smiles_records(cfg["smiles_file"])
        entries = [(k, parse_smiles(s)) for k, (s, _) in enumerate(records, start=1)]
        store = {}
        if cfg["conformers"]:
            for k, mol in entries:
                store[k] = embed_conformers(mol, n=cfg["conformers"], seed=cfg["seed"])
        index = LibraryIndex.build(entries, radius=cfg["fp_radius"], nbits=cfg["fp_bits"], conformers=store)
        index.save(cfg["index"])
        print(f"indexed {len(index)} molecules, alpha {index.alpha():.3f}", file=sys.stderr)
        return 0
    _need(cfg, "index")
    index = LibraryIndex.load(cfg["index"], radius=cfg["fp_radius"])
    rows = []
    queries = smiles or [s for s, _ in _smiles_records(cfg["input"])]
    for q in queries:
        for rank, (ident, sim) in enumerate(index.top_k(parse_smiles(q), cfg["k"]), start=1):
            rows.append({"query": q, "rank": rank, "id": ident, "smiles": index.smiles[index.position(ident)],
                         "similarity": sim})
    _write_csv(cfg["out"], rows)
    return 0


def _train_items(path, spec, seed):
    from .chem import write_canonical_smiles
    from .pharmacophore import perceive
    from .voxel import CoverageError, check_coverage

    items, dropped = [], 0
    for m in _molecules_3d(path, seed):
        p = perceive(m)
        try:
            check_coverage(p, spec, p.shape_centroid())
        except CoverageError:
            dropped += 1
            continue
        items.append((write_canonical_smiles(m), p))
    if dropped:
        print(f"skipped {dropped} molecules that do not fit the grid", file=sys.stderr)
    return items


def cmd_train(cfg):
    from .chem.tokenizer import build_vocabulary
    from .io_utils import atomic_write_json, atomic_write_text
    from .nn.checkpoint import save_checkpoint
    from .nn.model import CaptionerModel, ModelConfig
    from .nn.train import TrainConfig, fit
    from .plotting import loss_curves

    _need(cfg, "train", "out_dir")
    spec = _grid_spec(cfg)
    train = _train_items(cfg["train"], spec, cfg["seed"])
    val = _train_items(cfg["val"], spec, cfg["seed"]) if cfg["val"] else []
    if not train:
        raise InputError("no usable training molecules")
    vocab = build_vocabulary([s for s, _ in train])
    widths = tuple(int(w) for w in str(cfg["widths"]).split(","))
    model = CaptionerModel(ModelConfig(widths, cfg["hidden"], cfg["embed"], spec), vocab, seed=cfg["seed"])
    out = cfg["out_dir"]
    tc = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"], seed=cfg["seed"],
                     augment=cfg["augment"], max_translation=cfg["max_translation"], clip_norm=cfg["clip_norm"],
                     stop_accuracy=cfg["stop_accuracy"], checkpoint_dir=os.path.join(out, "checkpoints"))
    _echo(cfg, out, "train")
    atomic_write_text(os.path.join(out, "vocabulary.json"), vocab.to_json())
    history = fit(model, train, val, tc)
    save_checkpoint(model, os.path.join(out, "final.vcpt"), {"epoch": history[-1]["epoch"]})
    atomic_write_json(os.path.join(out, "history.json"), history)
    loss_curves(history, os.path.join(out, "loss.png"))
    last = history[-1]
    print(f"epoch {last['epoch']}: loss {last['train_loss']:.4f}, accuracy {last['train_accuracy']:.4f}",
          file=sys.stderr)
    return 0


def cmd_sample(cfg):
    from .nn.checkpoint import load_checkpoint
    from .nn.model import SamplerConfig
    from .pharmacophore import perceive
    from .voxel import load_grid, voxelize

    _need(cfg, "checkpoint")
    model, _ = load_checkpoint(cfg["checkpoint"])
    if cfg["grid"]:
        grid = load_grid(cfg["grid"])
    else:
        _need(cfg, "query")
        grid = voxelize(perceive(_molecules_3d(cfg["query"], cfg["seed"])[0]), model.config.grid, dtype=np.float32)
    sc = SamplerConfig(tau=cfg["tau"], top_k=cfg["top_k"], max_length=cfg["max_length"])
    smiles = model.sample(grid, cfg["n"], sc, np.random.default_rng(cfg["seed"]))
    text = "".join(s + "\n" for s in smiles)
    if cfg["out"]:
        from .io_utils import atomic_write_text

        atomic_write_text(cfg["out"], text)
    else:
        sys.stdout.write(text)
    return 0


def _finish_report(report, cfg, name):
    from .plotting import report_figures
    from .workflows import check_report, write_report

    check_report(report)
    write_report(report, cfg["out_dir"], config=cfg, prefix=name)
    if cfg.get("plots", True):
        report_figures(report, cfg["out_dir"], prefix=name)
    _echo(cfg, cfg["out_dir"], name)
    agg = report["aggregate"]
    print(f"{name}: {agg['n_queries']} queries, median hits {agg['hits']['median']}, "
          f"queries with a hit {agg['queries_with_hit']}", file=sys.stderr)


def cmd_denovo(cfg):
    from .workflows import run_baseline, run_denovo

    _need(cfg, "queries", "out_dir")
    gen, model = _generator(cfg)
    spec = model.config.grid if model is not None else _grid_spec(cfg)
    queries = _molecules_3d(cfg["queries"], cfg["seed"])
    report = run_denovo(gen, queries, cfg["budget"], seed=cfg["seed"], spec=spec,
                        schedule=_schedule(cfg["schedule"]), n_conformers=cfg["conformers"], threads=cfg["threads"])
    _finish_report(report, cfg, "denovo")
    if cfg["baseline_library"]:
        from .chem import write_canonical_smiles
        from .chem.embed import embed_conformers

        library = [(write_canonical_smiles(m), embed_conformers(m, n=cfg["conformers"], seed=cfg["seed"]))
                   for m in _library_molecules(cfg["baseline_library"])]
        base = run_baseline(queries, library, cfg["budget"], seed=cfg["seed"], threads=cfg["threads"])
        _finish_report(base, cfg, "baseline")
    return 0


def _library_molecules(path):
    from .chem import parse_smiles

    if path.lower().endswith(".sdf"):
        return [m for _, confs in _group_conformers(_read_sdf(path)) for m in confs[:1]]
    return [parse_smiles(s, name=n) for s, n in _smiles_records(path)]


def cmd_fastsearch(cfg):
    from .similarity import LibraryIndex
    from .workflows import run_fast_search

    _need(cfg, "queries", "index", "out_dir")
    if not os.path.exists(cfg["index"]):
        raise InputError(f"no such index: {cfg['index']}")
    index = LibraryIndex.load(cfg["index"])
    if not index.conformers:
        raise InputError("the index has no conformer store (build it with --conformers)")
    if cfg["brute_force"]:
        gen, spec = None, _grid_spec(cfg)
    else:
        gen, model = _generator(cfg)
        spec = model.config.grid if model is not None else _grid_spec(cfg)
    queries = _molecules_3d(cfg["queries"], cfg["seed"])
    report = run_fast_search(gen, queries, index, cfg["n_g"], cfg["n_a"], seed=cfg["seed"], spec=spec,
                             schedule=_schedule(cfg["schedule"]), brute_force=bool(cfg["brute_force"]),
                             threads=cfg["threads"])
    report["aggregate"]["alpha_store"] = index.alpha()
    _finish_report(report, cfg, "fastsearch")
    return 0


def cmd_select(cfg):
    import glob

    from .nn.checkpoint import load_checkpoint
    from .io_utils import atomic_write_json
    from .workflows import select_checkpoint

    _need(cfg, "checkpoints", "queries")
    paths = sorted(glob.glob(os.path.join(cfg["checkpoints"], "*.vcpt")))
    if not paths:
        raise InputError(f"no .vcpt files in {cfg['checkpoints']}")
    cks = []
    for p in paths:
        model, header = load_checkpoint(p)
        cks.append((int(header.get("epoch", len(cks) + 1)), model))
    queries = _molecules_3d(cfg["queries"], cfg["seed"])
    rng = np.random.default_rng(cfg["seed"])
    if len(queries) > cfg["n_queries"]:
        queries = [queries[i] for i in sorted(rng.choice(len(queries), cfg["n_queries"], replace=False))]
    epoch, totals = select_checkpoint(cks, queries, cfg["samples"], seed=cfg["seed"], n_conformers=cfg["conformers"])
    result = {"selected_epoch": epoch, "totals": [{"epoch": e, "unique_scaffold_hits": t} for e, t in totals]}
    if cfg["out"]:
        atomic_write_json(cfg["out"], result)
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_gradcheck(cfg):
    from .nn.gradcheck import gradient_check, tiny_batch, tiny_model

    model = tiny_model(seed=cfg["seed"])
    grids, ids = tiny_batch(model, seed=cfg["seed"])
    err = gradient_check(model, grids, ids, n_params=cfg["n_params"], step=cfg["step"], seed=cfg["seed"])
    ok = err < cfg["tolerance"]
    print(json.dumps({"parameters": model.num_parameters(), "max_relative_error": err, "pass": ok}))
    return 0 if ok else 1


def cmd_toy(cfg):
    from .chem import parse_smiles
    from .chem.embed import embed_3d
    from .chem.sdf import write_sdf
    from .io_utils import atomic_write_text
    from .toy import toy_index, toy_smiles

    _need(cfg, "out_dir")
    out = cfg["out_dir"]
    lib = toy_smiles(cfg["library_size"] + cfg["n_queries"], seed=cfg["seed"])
    queries, library = lib[:cfg["n_queries"]], lib[cfg["n_queries"]:]
    atomic_write_text(os.path.join(out, "library.smi"), "".join(f"{s}\tlib{k + 1}\n" for k, s in enumerate(library)))
    write_sdf([embed_3d(parse_smiles(s, name=f"q{k + 1}"), seed=cfg["seed"]) for k, s in enumerate(queries)],
              os.path.join(out, "queries.sdf"))
    index = toy_index(len(library), cfg["seed"], cfg["conformers"], smiles=library)
    index.save(os.path.join(out, "library.phix"))
    _echo(cfg, out, "toy")
    print(f"toy library {len(library)}, queries {len(queries)}, alpha {index.alpha():.3f}", file=sys.stderr)
    return 0


# --------------------------------------------------------------------------- parser


def _commands():
    cmds = []

    c = Command("canon", "print canonical SMILES (arguments or one per line on stdin)", cmd_canon)
    c.opt("--input", "-", "file of SMILES, '-' for stdin")
    c.positional("smiles", "SMILES strings", nargs="*")
    cmds.append(c)

    c = Command("tokenize", "split SMILES into tokens, map them to ids or build a vocabulary", cmd_tokenize)
    c.opt("--input", "-", "file of SMILES, '-' for stdin")
    c.opt("--vocab", None, "vocabulary JSON; prints token ids instead of tokens")
    c.opt("--build-vocab", None, "write a vocabulary built from the input to this path")
    c.positional("smiles", "SMILES strings", nargs="*")
    cmds.append(c)

    c = Command("embed", "generate 3D conformers for a SMILES file into an SDF", cmd_embed)
    c.opt("--input", None, "SMILES file (SMILES name per line)")
    c.opt("--out", None, "output SDF")
    c.opt("--conformers", 1, "conformers per molecule", type=int)
    cmds.append(c)

    c = Command("perceive", "pharmacophore profiles of 3D molecules", cmd_perceive)
    c.opt("--input", None, "SDF, or a SMILES file to embed first")
    c.opt("--out", None, "JSON output; prints channel counts when omitted")
    cmds.append(c)

    c = Command("voxelize", "write .voxg grids for 3D molecules", cmd_voxelize)
    c.opt("--input", None, "SDF, or a SMILES file to embed first")
    c.opt("--out-dir", None, "directory for .voxg files")
    _grid_opts(c)
    cmds.append(c)

    c = Command("score", "TanimotoCombo of candidates against the first query molecule", cmd_score)
    c.opt("--query", None, "query SDF")
    c.opt("--cands", None, "candidate SDF; consecutive records with one title are conformers of one molecule")
    c.opt("--out", "-", "CSV output, '-' for stdout")
    cmds.append(c)

    c = Command("index", "build or query a fingerprint index", cmd_index)
    c.positional("action", "'build', or 'query' followed by optional query SMILES", nargs="+")
    c.opt("--index", None, "index path (.phix; conformers go to <path>.sdf)")
    c.opt("--smiles-file", None, "library SMILES file for build")
    c.opt("--conformers", 0, "conformers per entry stored next to the index", type=int)
    c.opt("--fp-radius", 2, "circular fingerprint radius", type=int)
    c.opt("--fp-bits", 2048, "fingerprint length", type=int)
    c.opt("--input", "-", "query SMILES file for query, '-' for stdin")
    c.opt("--k", 5, "neighbours per query", type=int)
    c.opt("--out", "-", "CSV output for query, '-' for stdout")
    cmds.append(c)

    c = Command("train", "train the voxel captioning model", cmd_train)
    c.opt("--train", None, "training molecules (SDF or SMILES file)")
    c.opt("--val", None, "validation molecules (SDF or SMILES file)")
    c.opt("--out-dir", None, "directory for checkpoints, history and plots")
    c.opt("--epochs", 300, "training epochs", type=int)
    c.opt("--batch-size", 16, "minibatch size", type=int)
    c.opt("--lr", 1e-3, "Adam learning rate", type=float)
    c.opt("--clip-norm", 5.0, "global gradient-norm clip (0 disables)", type=float)
    c.opt("--augment", True, "random rotation and translation per sample per epoch",
          action=argparse.BooleanOptionalAction)
    c.opt("--max-translation", 1.0, "augmentation translation bound in angstrom", type=float)
    c.opt("--stop-accuracy", None, "stop once teacher-forced accuracy exceeds this", type=float)
    c.opt("--widths", "16,32,64,128", "encoder channel widths, comma separated")
    c.opt("--hidden", 256, "latent and LSTM width", type=int)
    c.opt("--embed", 64, "token embedding width", type=int)
    _grid_opts(c)
    cmds.append(c)

    c = Command("sample", "sample SMILES from a checkpoint for one grid or query", cmd_sample)
    c.opt("--checkpoint", None, "VCPT checkpoint")
    c.opt("--grid", None, ".voxg grid to condition on")
    c.opt("--query", None, "SDF or SMILES file; the first molecule is voxelized")
    c.opt("--n", 10, "number of samples", type=int)
    c.opt("--tau", 1.0, "temperature (>= 1)", type=float)
    c.opt("--top-k", None, "restrict sampling to the k largest logits", type=int)
    c.opt("--max-length", 100, "token limit per sample", type=int)
    c.opt("--out", None, "output file; stdout when omitted")
    cmds.append(c)

    def workflow_opts(c):
        c.opt("--checkpoint", None, "VCPT checkpoint used as generator")
        c.opt("--replay", None, "SMILES file replayed as the generator (instead of a checkpoint)")
        c.opt("--queries", None, "query molecules (SDF or SMILES file)")
        c.opt("--out-dir", None, "report directory")
        c.opt("--schedule", "1.0,1.1,1.25,1.5", "temperatures, equal raw-draw budget each")
        c.opt("--top-k", None, "top-k restriction during sampling", type=int)
        c.opt("--max-length", 100, "token limit per sample", type=int)
        c.opt("--plots", True, "render PNG figures next to the reports", action=argparse.BooleanOptionalAction)
        _grid_opts(c)

    c = Command("denovo", "de-novo benchmark: sample, embed, score, report", cmd_denovo)
    workflow_opts(c)
    c.opt("--budget", 1000, "valid unique molecules scored per query", type=int)
    c.opt("--conformers", 5, "conformers per generated molecule", type=int)
    c.opt("--baseline-library", None, "also run the random-library baseline on this SMILES/SDF file")
    cmds.append(c)

    c = Command("fastsearch", "generated molecules -> 2D analogs -> 3D scoring of stored conformers", cmd_fastsearch)
    workflow_opts(c)
    c.opt("--index", None, "index with a conformer store")
    c.opt("--n-g", 500, "unique valid generated molecules per query", type=int)
    c.opt("--n-a", 1, "2D analogs per generated molecule", type=int)
    c.opt("--brute-force", False, "score the whole index instead of generated analogs", action="store_true")
    cmds.append(c)

    c = Command("select", "pick the checkpoint with most unique-scaffold hits on validation queries", cmd_select)
    c.opt("--checkpoints", None, "directory of .vcpt files")
    c.opt("--queries", None, "validation molecules (SDF or SMILES file)")
    c.opt("--n-queries", 10, "validation queries drawn", type=int)
    c.opt("--samples", 100, "generated molecules per query", type=int)
    c.opt("--conformers", 5, "conformers per generated molecule", type=int)
    c.opt("--out", None, "JSON output")
    cmds.append(c)

    c = Command("gradcheck", "finite-difference check of the autodiff on the tiny reference model", cmd_gradcheck)
    c.opt("--n-params", 200, "parameters probed", type=int)
    c.opt("--step", 1e-4, "central-difference step", type=float)
    c.opt("--tolerance", 1e-4, "maximum accepted relative error", type=float)
    cmds.append(c)

    c = Command("toy", "write a toy library, query set and indexed conformer store", cmd_toy)
    c.opt("--out-dir", None, "output directory")
    c.opt("--library-size", 500, "library molecules", type=int)
    c.opt("--n-queries", 10, "query molecules (disjoint from the library)", type=int)
    c.opt("--conformers", 3, "conformers per library entry", type=int)
    cmds.append(c)
    return cmds


def _formats():
    from .nn.checkpoint import VCPT_VERSION
    from .similarity import PHIX_VERSION
    from .voxel import VOXG_VERSION

    return f"pharmvox {__version__} (voxg v{VOXG_VERSION}, PHIX v{PHIX_VERSION}, VCPT v{VCPT_VERSION})"


def build_parser():
    parser = _Parser(prog="pharmvox", description="Pharmacophore-shape voxel captioning and screening toolkit.")
    parser.add_argument("--version", action="version", version=_formats())
    sub = parser.add_subparsers(dest="command_name", metavar="command", parser_class=_Parser)
    for cmd in _commands():
        cmd.install(sub)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_help(sys.stderr)
            return 1
        cfg = resolve(args.command, args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if cfg["threads"] < 1:
            raise InputError("--threads must be >= 1")
        return args.command.run(cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        # chemistry, format and file errors all derive from these
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
