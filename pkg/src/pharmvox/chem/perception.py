"""Ring perception, valence model, Kekule assignment and aromaticity.

``assemble`` is the single funnel through which parsed graphs (SMILES or
SDF) become ``Molecule`` objects, so both readers share one valence and
aromaticity model.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import networkx as nx

from .molecule import (
    AROMATIC,
    Atom,
    AromaticityError,
    Bond,
    ChemError,
    Molecule,
    UnsupportedElementError,
    ValenceError,
)
from .tables import SUPPORTED_ELEMENTS, allowed_valences


# --------------------------------------------------------------------------- rings


def ring_bond_mask(n, edges):
    """True for every edge that lies on a cycle (i.e. is not a bridge)."""
    adj = [[] for _ in range(n)]
    for k, (a, b) in enumerate(edges):
        adj[a].append((b, k))
        adj[b].append((a, k))
    disc = [-1] * n
    low = [0] * n
    is_bridge = [False] * len(edges)
    timer = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            v, parent_edge, it = stack[-1]
            advanced = False
            for w, k in it:
                if k == parent_edge:
                    continue
                if disc[w] < 0:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, k, iter(adj[w])))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if stack:
                u = stack[-1][0]
                low[u] = min(low[u], low[v])
                if low[v] > disc[u]:
                    is_bridge[parent_edge] = True
    return [not br for br in is_bridge]


def _shortest_path(adj, start, goal, banned_edge):
    prev = {start: None}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        if v == goal:
            break
        for w, k in adj[v]:
            if k == banned_edge or w in prev:
                continue
            prev[w] = v
            queue.append(w)
    if goal not in prev:
        return None
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def sssr(n, edges):
    """Smallest set of smallest rings.

    Candidates are the shortest cycles through each ring bond; a greedy
    GF(2)-independent selection by size keeps exactly ``E - V + C`` of them.
    """
    mask = ring_bond_mask(n, edges)
    ring_edges = [(k, e) for k, e in enumerate(edges) if mask[k]]
    if not ring_edges:
        return []
    adj = [[] for _ in range(n)]
    for k, (a, b) in ring_edges:
        adj[a].append((b, k))
        adj[b].append((a, k))
    for lst in adj:
        lst.sort()
    edge_id = {frozenset(e): k for k, e in ring_edges}

    atoms_in = {v for _, e in ring_edges for v in e}
    g = nx.Graph()
    g.add_nodes_from(atoms_in)
    g.add_edges_from(e for _, e in ring_edges)
    nrings = len(ring_edges) - len(atoms_in) + nx.number_connected_components(g)

    candidates = {}
    for k, (a, b) in ring_edges:
        path = _shortest_path(adj, a, b, k)
        if path is None:
            continue
        bits = 0
        for i in range(len(path)):
            bits |= 1 << edge_id[frozenset((path[i], path[(i + 1) % len(path)]))]
        candidates.setdefault(bits, path)
    ordered = sorted(candidates.items(), key=lambda kv: (len(kv[1]), sorted(kv[1])))
    rings = _independent(ordered, nrings)
    if len(rings) < nrings:
        # cage-like systems: fall back to a full minimum cycle basis
        extra = []
        for cyc in nx.minimum_cycle_basis(g):
            path = _cycle_order(cyc, adj)
            bits = 0
            for i in range(len(path)):
                bits |= 1 << edge_id[frozenset((path[i], path[(i + 1) % len(path)]))]
            extra.append((bits, path))
        extra.sort(key=lambda kv: (len(kv[1]), sorted(kv[1])))
        rings = _independent(ordered + extra, nrings)
    return [tuple(r) for r in rings]


def _independent(ordered, limit):
    basis = []  # reduced rows kept as (pivot bit, vector)
    chosen = []
    for bits, path in ordered:
        v = bits
        for pivot, row in basis:
            if v & pivot:
                v ^= row
        if v:
            basis.append((1 << (v.bit_length() - 1), v))
            basis.sort(key=lambda t: -t[0])
            chosen.append(path)
            if len(chosen) == limit:
                break
    return chosen


def _cycle_order(nodes, adj):
    nodes = set(nodes)
    start = min(nodes)
    order = [start]
    prev = None
    cur = start
    while True:
        nxt = [w for w, _ in adj[cur] if w in nodes and w != prev and w not in order[1:]]
        nxt = [w for w in nxt if w != start or len(order) == len(nodes)]
        if not nxt or nxt[0] == start:
            break
        prev, cur = cur, nxt[0]
        order.append(cur)
    return order


# --------------------------------------------------------------------------- valence


def default_implicit_h(element, charge, bond_sum):
    """Implicit hydrogens for an organic-subset atom with given bond-order sum."""
    for v in allowed_valences(element, charge):
        if v >= bond_sum:
            return v - bond_sum
    raise ValenceError(f"{element} (charge {charge}) cannot carry bond order sum {bond_sum}")


def aromatic_implicit_h(element, charge, bond_sum):
    """Implicit H for a lowercase organic-subset atom (aromatic bonds counted as 1)."""
    if element in ("C", "B"):
        vals = allowed_valences(element, charge)
        return max(0, vals[0] - bond_sum - 1) if vals else 0
    return 0


def free_valence(element, charge, used):
    for v in allowed_valences(element, charge):
        if v >= used:
            return v - used
    return -1


def max_valence(element, charge):
    vals = allowed_valences(element, charge)
    return max(vals) if vals else 0


# --------------------------------------------------------------------------- kekule


def kekule_orders(atoms, bonds):
    """Replace aromatic bond codes by a valid alternating 1/2 assignment.

    ``atoms`` need final hcounts. Atoms whose remaining valence is positive
    must receive exactly one double bond; a perfect matching over aromatic
    bonds among those atoms gives the assignment.
    """
    orders = [b.order for b in bonds]
    arom_bonds = [k for k, b in enumerate(bonds) if b.order == AROMATIC]
    if not arom_bonds:
        return orders
    used = [a.hcount for a in atoms]
    for b in bonds:
        inc = 1 if b.order == AROMATIC else b.order
        used[b.a] += inc
        used[b.b] += inc
    needs = set()
    for k in arom_bonds:
        for i in (bonds[k].a, bonds[k].b):
            if i in needs:
                continue
            atom = atoms[i]
            if free_valence(atom.element, atom.charge, used[i]) >= 1:
                needs.add(i)
    g = nx.Graph()
    g.add_nodes_from(sorted(needs))
    for k in arom_bonds:
        a, b = bonds[k].a, bonds[k].b
        if a in needs and b in needs:
            g.add_edge(a, b)
    matching = nx.max_weight_matching(g, maxcardinality=True)
    matched = set()
    for a, b in matching:
        matched.add(a)
        matched.add(b)
    if matched != needs:
        raise AromaticityError("aromatic system cannot be kekulized")
    pairs = {frozenset(p) for p in matching}
    for k in arom_bonds:
        orders[k] = 2 if frozenset((bonds[k].a, bonds[k].b)) in pairs else 1
    return orders


def kekulize(mol: Molecule) -> Molecule:
    """Kekule form of ``mol`` (aromatic flags cleared, explicit 1/2 orders)."""
    orders = kekule_orders(mol.atoms, mol.bonds)
    atoms = tuple(replace(a, aromatic=False) for a in mol.atoms)
    bonds = tuple(replace(b, order=o) for b, o in zip(mol.bonds, orders))
    return Molecule(atoms, bonds, mol.coords, mol.name)


# --------------------------------------------------------------------------- aromaticity


def _pi_electrons(i, atoms, bonds, nbrs, ring_bond):
    """Electrons atom ``i`` donates to a ring, or None when it breaks conjugation."""
    atom = atoms[i]
    endo_double = False
    exo_double_partner = None
    for j, k in nbrs[i]:
        order = bonds[k].order
        if order == 3:
            return None
        if order == 2:
            if ring_bond[k]:
                endo_double = True
            else:
                exo_double_partner = atoms[j].element
    if endo_double:
        return 1
    el, q = atom.element, atom.charge
    if exo_double_partner is not None:
        if el == "C" and exo_double_partner in ("O", "N", "S"):
            return 0
        return None
    total = len(nbrs[i]) + atom.hcount
    if el == "C":
        if q == -1:
            return 2
        if q == 1:
            return 0
        return None
    if el in ("N", "P"):
        if q == 0 and total == 3:
            return 2
        if q == -1 and total == 2:
            return 2
        return None
    if el in ("O", "S", "Se"):
        if q == 0 and total == 2:
            return 2
        return None
    if el == "B" and q == 0 and total == 3:
        return 0
    return None


def perceive_aromaticity(atoms, bonds, rings):
    """Hueckel 4n+2 test on each SSSR ring (and fused ring pairs) of a Kekule graph.

    Returns (aromatic atom flags, aromatic bond flags).
    """
    n = len(atoms)
    nbrs = [[] for _ in range(n)]
    for k, b in enumerate(bonds):
        nbrs[b.a].append((b.b, k))
        nbrs[b.b].append((b.a, k))
    ring_bond = ring_bond_mask(n, [(b.a, b.b) for b in bonds])
    electrons = [_pi_electrons(i, atoms, bonds, nbrs, ring_bond) for i in range(n)]
    lookup = {frozenset((b.a, b.b)): k for k, b in enumerate(bonds)}

    def ring_edges(ring):
        return [lookup[frozenset((ring[t], ring[(t + 1) % len(ring)]))] for t in range(len(ring))]

    arom_atoms = [False] * n
    arom_bonds = [False] * len(bonds)

    def mark(atom_set, edge_list):
        for i in atom_set:
            arom_atoms[i] = True
        for k in edge_list:
            arom_bonds[k] = True

    def huckel(atom_set):
        if any(electrons[i] is None for i in atom_set):
            return False
        return sum(electrons[i] for i in atom_set) % 4 == 2

    failed = []
    for ring in rings:
        edges = ring_edges(ring)
        if huckel(ring):
            mark(ring, edges)
        else:
            failed.append((set(ring), set(edges)))
    # fused pairs (azulene-like envelopes)
    for x in range(len(failed)):
        for y in range(x + 1, len(failed)):
            ax, ex = failed[x]
            ay, ey = failed[y]
            shared = ex & ey
            if len(shared) != 1:
                continue
            envelope_atoms = ax | ay
            if huckel(envelope_atoms):
                mark(envelope_atoms, (ex | ey) - shared)
                for k in shared:
                    arom_bonds[k] = True
    return arom_atoms, arom_bonds


# --------------------------------------------------------------------------- assembly


@dataclass
class RawAtom:
    element: str
    charge: int = 0
    hcount: Optional[int] = None  # None: derive from the valence model
    aromatic: bool = False
    isotope: Optional[int] = None
    chirality: Optional[str] = None


def assemble(raw_atoms, raw_bonds, coords=None, name="", fold_hydrogens=True) -> Molecule:
    """Validate a parsed graph and return a perceived ``Molecule``.

    ``raw_bonds`` are (a, b, order, stereo) with order in {1, 2, 3, AROMATIC}.
    """
    for ra in raw_atoms:
        if ra.element not in SUPPORTED_ELEMENTS:
            raise UnsupportedElementError(f"unsupported element {ra.element!r}")
    n = len(raw_atoms)
    edges = [(a, b) for a, b, _, _ in raw_bonds]
    in_ring = ring_bond_mask(n, edges)
    bonds = []
    for k, (a, b, order, stereo) in enumerate(raw_bonds):
        if order == AROMATIC and not (raw_atoms[a].aromatic and raw_atoms[b].aromatic and in_ring[k]):
            order = 1
        bonds.append(Bond(a, b, order, stereo))

    sums = [0] * n
    for b in bonds:
        inc = 1 if b.order == AROMATIC else b.order
        sums[b.a] += inc
        sums[b.b] += inc
    atoms = []
    for i, ra in enumerate(raw_atoms):
        h = ra.hcount
        if h is None:
            if ra.aromatic:
                h = aromatic_implicit_h(ra.element, ra.charge, sums[i])
            else:
                h = default_implicit_h(ra.element, ra.charge, sums[i])
        atoms.append(Atom(ra.element, ra.charge, h, ra.aromatic, ra.isotope, ra.chirality))

    orders = kekule_orders(atoms, bonds)
    bonds = [replace(b, order=o) for b, o in zip(bonds, orders)]

    if fold_hydrogens:
        atoms, bonds, coords = _fold_hydrogens(atoms, bonds, coords)

    used = [a.hcount for a in atoms]
    for b in bonds:
        used[b.a] += b.order
        used[b.b] += b.order
    for i, a in enumerate(atoms):
        vals = allowed_valences(a.element, a.charge)
        # below the lowest state is a radical; between states is impossible
        if not vals or (used[i] not in vals and used[i] > min(vals)):
            raise ValenceError(f"atom {i} ({a.element}, charge {a.charge}) has disallowed valence {used[i]}")

    kek_atoms = [replace(a, aromatic=False) for a in atoms]
    mol = Molecule(tuple(kek_atoms), tuple(bonds))
    arom_atoms, arom_bonds = perceive_aromaticity(kek_atoms, bonds, mol.rings)
    final_atoms = tuple(replace(a, aromatic=arom_atoms[i]) for i, a in enumerate(kek_atoms))
    final_bonds = tuple(replace(b, order=AROMATIC) if arom_bonds[k] else b for k, b in enumerate(bonds))
    return Molecule(final_atoms, final_bonds, coords, name)


def _fold_hydrogens(atoms, bonds, coords):
    nbrs = [[] for _ in atoms]
    for b in bonds:
        nbrs[b.a].append(b.b)
        nbrs[b.b].append(b.a)
    drop = set()
    extra_h = [0] * len(atoms)
    for i, a in enumerate(atoms):
        if a.element != "H" or a.charge != 0 or a.isotope is not None or len(nbrs[i]) != 1:
            continue
        j = nbrs[i][0]
        if atoms[j].element == "H":
            continue
        drop.add(i)
        extra_h[j] += 1
    if not drop:
        return atoms, bonds, coords
    keep = [i for i in range(len(atoms)) if i not in drop]
    remap = {old: new for new, old in enumerate(keep)}
    new_atoms = [replace(atoms[i], hcount=atoms[i].hcount + extra_h[i]) for i in keep]
    new_bonds = [replace(b, a=remap[b.a], b=remap[b.b]) for b in bonds if b.a not in drop and b.b not in drop]
    if coords is not None:
        coords = [coords[i] for i in keep]
    return new_atoms, new_bonds, coords


def rebuild(mol: Molecule, atoms, bonds, coords=None, name=None) -> Molecule:
    """Re-run perception on an edited Kekule graph (hcounts already final)."""
    raw = [RawAtom(a.element, a.charge, a.hcount, False, a.isotope, a.chirality) for a in atoms]
    raw_bonds = [(b.a, b.b, b.order, b.stereo) for b in bonds]
    if any(b.order == AROMATIC for b in bonds):
        raise ChemError("rebuild expects a Kekule graph")
    return assemble(raw, raw_bonds, coords, mol.name if name is None else name, fold_hydrogens=False)
