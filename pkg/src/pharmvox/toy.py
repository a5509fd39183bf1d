"""Deterministic toy chemistry: fragment-assembled libraries, indexes and fast-search probes."""

from __future__ import annotations

import numpy as np

from .chem import ChemError, parse_smiles, write_canonical_smiles
from .chem.edit import join
from .chem.embed import embed_conformers
from .similarity import LibraryIndex

# Ring and chain pieces; any atom carrying hydrogen is an attachment point.
FRAGMENTS = (
    "c1ccccc1", "c1ccncc1", "c1ccoc1", "c1ccsc1", "c1cn[nH]c1", "C1CCNCC1", "C1CCOCC1", "C1CCCC1",
    "C1CC1", "C1CNCCN1", "c1ccc2ccccc2c1", "O=C1CCCN1",
    "C", "CC", "CCC", "CC(C)C", "O", "N", "C(=O)O", "C(=O)N", "OC", "C#N", "F", "Cl", "S(=O)(=O)N", "CO",
)


def _attachable(mol):
    return [i for i, a in enumerate(mol.atoms) if a.hcount > 0]


def random_molecule(rng, max_pieces=4, fragments=FRAGMENTS, parsed=None):
    """Join 2..max_pieces fragments at random hydrogen-bearing atoms."""
    parsed = parsed or [parse_smiles(s) for s in fragments]
    n = int(rng.integers(2, max_pieces + 1))
    mol = parsed[int(rng.integers(len(parsed)))]
    for _ in range(n - 1):
        frag = parsed[int(rng.integers(len(parsed)))]
        sites_a, sites_b = _attachable(mol), _attachable(frag)
        if not sites_a or not sites_b:
            break
        ia = sites_a[int(rng.integers(len(sites_a)))]
        ib = sites_b[int(rng.integers(len(sites_b)))]
        try:
            mol = join(mol, ia, frag, ib)
        except ChemError:
            continue
    return mol


def toy_smiles(n, seed=0, max_pieces=4, exclude=()):
    """``n`` distinct canonical SMILES from fragment assembly."""
    rng = np.random.default_rng(seed)
    parsed = [parse_smiles(s) for s in FRAGMENTS]
    seen = set(exclude)
    out = []
    while len(out) < n:
        smi = write_canonical_smiles(random_molecule(rng, max_pieces, parsed=parsed))
        if smi not in seen:
            seen.add(smi)
            out.append(smi)
    return out


def toy_index(n, seed=0, conformers=0, max_pieces=4, smiles=None):
    """LibraryIndex over ``n`` toy molecules with ids 1..n.

    With ``conformers`` > 0, each entry gets between 1 and that many embedded
    conformers (the count depends on the entry's torsion grid).
    """
    smiles = list(smiles) if smiles is not None else toy_smiles(n, seed, max_pieces)
    store = {}
    if conformers:
        for k, smi in enumerate(smiles, start=1):
            store[k] = embed_conformers(parse_smiles(smi), n=conformers, seed=seed)
    return LibraryIndex.build(list(enumerate(smiles, start=1)), conformers=store)


def methylated(smiles, rng):
    """One extra carbon on a random hydrogen-bearing heavy atom; None when no atom carries H."""
    mol = parse_smiles(smiles)
    sites = _attachable(mol)
    if not sites:
        return None
    return write_canonical_smiles(join(mol, sites[int(rng.integers(len(sites)))], parse_smiles("C"), 0))


def probe_set(n, seed=0, max_pieces=4):
    """(probes, analogs): each analog is its probe plus one carbon; neither list shares a structure."""
    rng = np.random.default_rng(seed + 7919)
    probes, analogs, seen = [], [], set()
    for smi in toy_smiles(4 * n, seed, max_pieces):
        if smi in seen:
            continue
        ana = methylated(smi, rng)
        if ana is None or ana in seen or ana == smi:
            continue
        seen.update((smi, ana))
        probes.append(smi)
        analogs.append(ana)
        if len(probes) == n:
            break
    return probes, analogs


def fastsearch_fixture(n, seed=0, conformers=2, oversample=1.5):
    """(probes, index) where every probe's nearest indexed neighbour is its own analog.

    Probes whose top-1 analog is someone else's are dropped, so ``n`` probes
    map to ``n`` distinct entries. The index keeps all analogs (the extras act
    as decoys) with embedded conformers.
    """
    probes, analogs = probe_set(int(n * oversample), seed)
    bare = toy_index(0, smiles=analogs)
    keep = []
    for k, smi in enumerate(probes):
        top = bare.top_k(parse_smiles(smi), 1, exclude_smiles=smi)
        if top and top[0][0] == k + 1:
            keep.append(smi)
        if len(keep) == n:
            break
    if len(keep) < n:
        raise ValueError(f"only {len(keep)} probes map uniquely; raise oversample")
    return keep, toy_index(len(analogs), seed, conformers, smiles=analogs)
