"""Canonical atom ranking by iterative invariant refinement."""

from .molecule import Molecule
from .tables import atomic_number


def _dense(keys):
    order = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def atom_invariants(mol: Molecule):
    flags = mol.ring_atom_flags
    return [
        (mol.degree(i), atomic_number(a.element), a.isotope or 0, a.charge, a.hcount, a.aromatic, flags[i])
        for i, a in enumerate(mol.atoms)
    ]


def _refine(mol, ranks):
    nclass = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((mol.bonds[k].order, ranks[j]) for j, k in mol.neighbors[i])))
            for i in range(len(ranks))
        ]
        ranks = _dense(keys)
        n = len(set(ranks))
        if n == nclass:
            return ranks
        nclass = n


def canonical_ranks(mol: Molecule):
    """Ranks 0..n-1 that do not depend on the input atom order.

    Refinement uses (degree, element, isotope, charge, H count, aromaticity,
    ring membership) and bond-order-labelled neighbour ranks. Remaining ties
    are broken by individualizing the lowest-index member of the lowest tied
    class, then refining again; tied atoms at that point are symmetry
    equivalent in practice, so the choice does not change the output string.
    """
    n = len(mol.atoms)
    if n == 0:
        return []
    ranks = _refine(mol, _dense(atom_invariants(mol)))
    while len(set(ranks)) < n:
        counts = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = min(r for r, c in counts.items() if c > 1)
        pick = min(i for i in range(n) if ranks[i] == tied)
        ranks = [2 * r + (1 if (r == tied and i != pick) else 0) for i, r in enumerate(ranks)]
        ranks = _refine(mol, _dense(ranks))
    return ranks
