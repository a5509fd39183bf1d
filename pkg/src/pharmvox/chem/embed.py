"""Crude deterministic 3D embedding.

Ring systems are laid out as cyclic polygons with exact bond lengths (fused
rings across their shared bond, spiro rings in a perpendicular plane);
bridged systems fall back to restraint minimization. Acyclic parts are
grown from ideal hybridization templates, and rotatable bonds are searched
on a small torsion grid scored by a pairwise 1/d^2 clash term.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.csgraph import shortest_path

from .molecule import AROMATIC, ChemError, Molecule
from .tables import bond_length, ideal_angle

BUDGET = 200
TOL_BOND = 0.08
MIN_NONBONDED = 1.2
SINGLE_GRID = (180.0, 60.0, -60.0)
DOUBLE_GRID = (180.0, 0.0)


class EmbeddingError(ChemError):
    pass


# --------------------------------------------------------------------------- geometry helpers


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 1e-12 else v


def _perpendicular(v):
    trial = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return _unit(np.cross(v, trial))


def _rotation_about(axis, angle):
    axis = _unit(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def _rotation_between(a, b):
    """Proper rotation taking unit vector a onto unit vector b."""
    a, b = _unit(a), _unit(b)
    c = float(np.dot(a, b))
    if c > 1 - 1e-12:
        return np.eye(3)
    if c < -1 + 1e-12:
        return _rotation_about(_perpendicular(a), np.pi)
    return _rotation_about(np.cross(a, b), np.arccos(np.clip(c, -1, 1)))


def dihedral(p0, p1, p2, p3):
    """Dihedral angle in degrees."""
    b0 = p0 - p1
    b1 = _unit(p2 - p1)
    b2 = p3 - p2
    v = b0 - np.dot(b0, b1) * b1
    w = b2 - np.dot(b2, b1) * b1
    x = np.dot(v, w)
    y = np.dot(np.cross(b1, v), w)
    return float(np.degrees(np.arctan2(y, x)))


def _kabsch(src, dst):
    h = src.T @ dst
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


_TEMPLATES = {
    2: np.array([[1.0, 0, 0], [-1.0, 0, 0]]),
    3: np.array([[1.0, 0, 0], [-0.5, np.sqrt(3) / 2, 0], [-0.5, -np.sqrt(3) / 2, 0]]),
    4: np.array([[1.0, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3),
    5: np.array([[0, 0, 1.0], [0, 0, -1.0], [1.0, 0, 0], [-0.5, np.sqrt(3) / 2, 0], [-0.5, -np.sqrt(3) / 2, 0]]),
    6: np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0, 0, 1.0], [0, 0, -1.0]]),
}


def _template_size(mol, i, hyb):
    base = {"sp": 2, "sp2": 3, "sp3": 4}[hyb]
    return min(max(base, mol.degree(i)), 6)


def hybridization(mol: Molecule, i: int) -> str:
    orders = [mol.bonds[k].order for _, k in mol.neighbors[i]]
    if 3 in orders or orders.count(2) >= 2 and mol.degree(i) == 2:
        return "sp"
    if mol.atoms[i].aromatic or 2 in orders or AROMATIC in orders:
        return "sp2"
    return "sp3"


def _bond_len(mol, i, j):
    bond = mol.bond_between(i, j)
    return bond_length(mol.atoms[i].element, mol.atoms[j].element, bond.order)


def _free_slots(template, placed_dirs, ref_perp=None, phi=180.0):
    """Directions left free after fitting ``template`` onto the placed neighbour directions.

    With one placed direction the template is spun about it so that the first
    free slot sits at dihedral ``phi`` relative to ``ref_perp``.
    """
    k = len(placed_dirs)
    if k == 0:
        return list(template)
    if k == 1:
        n1 = placed_dirs[0]
        rot = _rotation_between(template[0], n1)
        dirs = template @ rot.T
        if len(dirs) < 2:
            return []
        ref = ref_perp if ref_perp is not None else _perpendicular(n1)
        ref = _unit(ref - np.dot(ref, n1) * n1)
        cur = dirs[1] - np.dot(dirs[1], n1) * n1
        # dihedral measured looking down parent->atom, with the reference on the parent side
        axis = -n1
        cur_angle = np.degrees(np.arctan2(np.dot(np.cross(axis, ref), cur), np.dot(ref, cur)))
        spin = _rotation_about(axis, np.radians(phi - cur_angle))
        dirs = dirs @ spin.T
        return list(dirs[1:])
    placed = np.array(placed_dirs)
    m = len(template)
    if k >= m:
        return []
    best = None
    for subset in itertools.permutations(range(m), k):
        src = template[list(subset)]
        rot = _kabsch(src, placed)
        err = float(np.sum((src @ rot.T - placed) ** 2))
        if best is None or err < best[0] - 1e-12:
            best = (err, rot, subset)
    _, rot, subset = best
    return [template[t] @ rot.T for t in range(m) if t not in subset]


# --------------------------------------------------------------------------- ring systems


def _cyclic_polygon(sides):
    """Vertices of a convex polygon inscribed in a circle with the given side lengths."""
    sides = np.asarray(sides, float)
    lo = sides.max() / 2 * (1 + 1e-12)
    hi = sides.sum()

    def total(radius):
        return np.sum(2 * np.arcsin(np.clip(sides / (2 * radius), -1, 1)))

    if total(lo) < 2 * np.pi:
        # the longest side subtends more than half the circle: not expected for ring bonds
        lo = sides.max() / 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) > 2 * np.pi:
            lo = mid
        else:
            hi = mid
    radius = 0.5 * (lo + hi)
    angles = np.concatenate([[0.0], np.cumsum(2 * np.arcsin(np.clip(sides / (2 * radius), -1, 1)))[:-1]])
    return np.stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros_like(angles)], axis=1)


def _ring_polygon(mol, ring):
    n = len(ring)
    sides = [_bond_len(mol, ring[t], ring[(t + 1) % n]) for t in range(n)]
    return _cyclic_polygon(sides)


def _layout_ring_system(mol, rings, rng):
    """Local coordinates for one ring system, or None when a bridged ring defeats the template."""
    pos = {}
    remaining = sorted(rings, key=lambda r: (-len(r), sorted(r)))
    first = remaining.pop(0)
    poly = _ring_polygon(mol, first)
    for a, p in zip(first, poly):
        pos[a] = p
    done = [first]
    while remaining:
        remaining.sort(key=lambda r: (-sum(a in pos for a in r), -len(r), sorted(r)))
        ring = remaining.pop(0)
        shared = [a for a in ring if a in pos]
        n = len(ring)
        poly = _ring_polygon(mol, ring)
        if len(shared) == 2 and mol.bond_between(*shared) is not None:
            ia, ib = ring.index(shared[0]), ring.index(shared[1])
            if (ib - ia) % n != 1:
                ia, ib = ib, ia
            a, b = ring[ia], ring[ib]
            # rotate the cycle so that a is vertex 0 and b is vertex 1
            order = [ring[(ia + t) % n] for t in range(n)]
            poly = _ring_polygon(mol, order)
            pa, pb = pos[a], pos[b]
            host = next(r for r in done if a in r and b in r)
            placed_centroid = np.mean([pos[x] for x in host], axis=0)
            edge = pb - pa
            mid = 0.5 * (pa + pb)
            normal = _plane_normal([pos[x] for x in host])
            side = np.cross(normal, _unit(edge))
            if np.dot(side, mid - placed_centroid) < 0:
                side = -side
            # local frame of the template: x along edge, y towards the centre
            t_edge = poly[1] - poly[0]
            t_mid = 0.5 * (poly[0] + poly[1])
            t_centre = -t_mid
            ex = _unit(t_edge)
            ey = _unit(t_centre - np.dot(t_centre, ex) * ex)
            wx = _unit(edge)
            wy = side
            for t, atom in enumerate(order):
                if atom in pos:
                    continue
                rel = poly[t] - poly[0]
                pos[atom] = pa + np.dot(rel, ex) * wx + np.dot(rel, ey) * wy
        elif len(shared) == 1:
            s = shared[0]
            i0 = ring.index(s)
            order = [ring[(i0 + t) % n] for t in range(n)]
            poly = _ring_polygon(mol, order)
            nbrs = [pos[j] for j, _ in mol.neighbors[s] if j in pos]
            outward = _unit(-np.sum([_unit(p - pos[s]) for p in nbrs], axis=0)) if nbrs else np.array([1.0, 0, 0])
            host = next(r for r in done if s in r)
            normal = _plane_normal([pos[x] for x in host])
            centre_dir = poly.mean(axis=0) - poly[0]
            t_x = _unit(centre_dir)
            t_y = _unit(np.cross(np.array([0, 0, 1.0]), t_x))
            for t, atom in enumerate(order[1:], start=1):
                rel = poly[t] - poly[0]
                pos[atom] = pos[s] + np.dot(rel, t_x) * outward + np.dot(rel, t_y) * normal
        else:
            return None
        done.append(ring)
    return pos


def _plane_normal(points):
    pts = np.asarray(points, float)
    if len(pts) < 3:
        return np.array([0, 0, 1.0])
    centred = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centred)
    return vt[2]


# --------------------------------------------------------------------------- restraint refinement


def _restraints(mol, atoms):
    """Bond, 1-3 and repulsion pair lists restricted to ``atoms`` (local indices)."""
    local = {a: t for t, a in enumerate(atoms)}
    bonds = []
    for b in mol.bonds:
        if b.a in local and b.b in local:
            bonds.append((local[b.a], local[b.b], _bond_len(mol, b.a, b.b)))
    ring_of = {}
    for r in mol.rings:
        for a in r:
            ring_of.setdefault(a, []).append(r)
    angles = {}
    for c in atoms:
        nb = [j for j, _ in mol.neighbors[c] if j in local]
        hyb = hybridization(mol, c)
        for i, j in itertools.combinations(nb, 2):
            theta = None
            for r in ring_of.get(c, []):
                if i in r and j in r:
                    theta = np.pi * (len(r) - 2) / len(r)
                    break
            if theta is None:
                if mol.degree(c) > 4:
                    theta = np.pi / 2
                else:
                    theta = np.radians(ideal_angle(hyb))
            li, lj = _bond_len(mol, c, i), _bond_len(mol, c, j)
            key = (min(local[i], local[j]), max(local[i], local[j]))
            angles.setdefault(key, np.sqrt(li * li + lj * lj - 2 * li * lj * np.cos(theta)))
    graph = np.zeros((len(atoms), len(atoms)))
    for i, j, _ in bonds:
        graph[i, j] = graph[j, i] = 1
    topo = shortest_path(graph, unweighted=True, directed=False)
    far = [(i, j) for i in range(len(atoms)) for j in range(i + 1, len(atoms)) if topo[i, j] >= 3]
    return bonds, [(i, j, d) for (i, j), d in angles.items()], far


def _energy(x, bonds, angles, far, rep_dist):
    xyz = x.reshape(-1, 3)
    grad = np.zeros_like(xyz)
    e = 0.0
    for pairs, k, mode in ((bonds, 100.0, "eq"), (angles, 10.0, "eq"), (far, 10.0, "rep")):
        if len(pairs) == 0:
            continue
        arr = np.asarray(pairs, float)
        i = arr[:, 0].astype(int)
        j = arr[:, 1].astype(int)
        diff = xyz[i] - xyz[j]
        d = np.linalg.norm(diff, axis=1) + 1e-12
        if mode == "eq":
            delta = d - arr[:, 2]
        else:
            delta = np.minimum(d - rep_dist, 0.0)
        e += k * float(np.sum(delta ** 2))
        g = (2 * k * delta / d)[:, None] * diff
        np.add.at(grad, i, g)
        np.add.at(grad, j, -g)
    return e, grad.ravel()


def refine(mol, atoms, xyz, rep_dist=2.5, maxiter=2000):
    """L-BFGS restraint minimization of the given atoms' coordinates."""
    bonds, angles, far = _restraints(mol, atoms)
    res = minimize(_energy, np.asarray(xyz, float).ravel(), args=(bonds, angles, far, rep_dist), jac=True, method="L-BFGS-B", options={"maxiter": maxiter, "gtol": 1e-8})
    return res.x.reshape(-1, 3)


def _bonds_ok(mol, atoms, xyz, tol):
    local = {a: t for t, a in enumerate(atoms)}
    for b in mol.bonds:
        if b.a in local and b.b in local:
            d = np.linalg.norm(xyz[local[b.a]] - xyz[local[b.b]])
            if abs(d - _bond_len(mol, b.a, b.b)) > tol:
                return False
    return True


def _distance_geometry(mol, atoms, rng, attempts=8):
    atoms = list(atoms)
    n = len(atoms)
    local = {a: t for t, a in enumerate(atoms)}
    lap = np.zeros((n, n))
    for b in mol.bonds:
        if b.a in local and b.b in local:
            i, j = local[b.a], local[b.b]
            lap[i, j] = lap[j, i] = -1
    lap -= np.diag(lap.sum(axis=1))
    _, vecs = np.linalg.eigh(lap)
    base = vecs[:, 1:4] * 1.5 * np.sqrt(n)
    for _ in range(attempts):
        start = base + rng.normal(scale=0.5, size=base.shape)
        xyz = refine(mol, atoms, start)
        if _bonds_ok(mol, atoms, xyz, 0.05):
            return {a: xyz[local[a]] for a in atoms}
    raise EmbeddingError("ring system could not be embedded")


def _ring_systems(mol):
    """Connected components of the ring-bond graph, each with its SSSR rings."""
    parent = list(range(len(mol.atoms)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k, b in enumerate(mol.bonds):
        if mol.ring_bond_flags[k]:
            parent[find(b.a)] = find(b.b)
    groups = {}
    for i in range(len(mol.atoms)):
        if mol.ring_atom_flags[i]:
            groups.setdefault(find(i), []).append(i)
    systems = []
    for members in groups.values():
        mset = set(members)
        rings = [r for r in mol.rings if r[0] in mset]
        systems.append((sorted(members), rings))
    systems.sort(key=lambda s: s[0][0])
    return systems


# --------------------------------------------------------------------------- tree assembly


class _Builder:
    def __init__(self, mol, rng):
        self.mol = mol
        self.rng = rng
        n = len(mol.atoms)
        self.frag_of = list(range(n))
        self.local = {}
        for members, rings in _ring_systems(mol):
            lay = _layout_ring_system(mol, rings, rng)
            if lay is None or not _bonds_ok(mol, members, np.array([lay[a] for a in members]), 0.05):
                lay = _distance_geometry(mol, members, rng)
            key = members[0]
            for a in members:
                self.frag_of[a] = key
            self.local[key] = lay
        self.pos = {}
        self.torsions = []  # (w, v, x, y, double)

    def fragment_atoms(self, a):
        key = self.frag_of[a]
        return sorted(self.local[key]) if key in self.local else [a]

    def root(self):
        if self.local:
            return max(self.local, key=lambda k: (len(self.local[k]), -k))
        mol = self.mol
        return max(range(len(mol.atoms)), key=lambda i: (mol.degree(i), -i))

    def place_fragment(self, key, attach=None, parent=None, direction=None, ref=None):
        mol = self.mol
        lay = self.local[key]
        atoms = sorted(lay)
        coords = np.array([lay[a] for a in atoms])
        if attach is None:
            coords = coords - coords.mean(axis=0)
            for a, p in zip(atoms, coords):
                self.pos[a] = p
            return
        idx = atoms.index(attach)
        ring_nbrs = [j for j, _ in mol.neighbors[attach] if j in lay]
        placed = [_unit(lay[j] - lay[attach]) for j in ring_nbrs]
        hyb = hybridization(mol, attach)
        slots = _free_slots(_TEMPLATES[_template_size(mol, attach, hyb)], placed)
        out = slots[0] if slots else _unit(-np.sum(placed, axis=0))
        rot = _rotation_between(out, -direction)
        target = self.pos[parent] + _bond_len(mol, parent, attach) * direction
        coords = (coords - coords[idx]) @ rot.T + target
        y = ring_nbrs[0]
        if ref is not None:
            cur = dihedral(self.pos[ref], self.pos[parent], coords[idx], coords[atoms.index(y)])
            spin = _rotation_about(direction, np.radians(180.0 - cur))
            coords = (coords - target) @ spin.T + target
        for a, p in zip(atoms, coords):
            self.pos[a] = p
        self.torsions.append((parent, attach, ref, y, self._is_double(parent, attach)))

    def _is_double(self, a, b):
        return self.mol.bond_between(a, b).order == 2

    def build(self):
        mol = self.mol
        root = self.root()
        queue = deque()
        tree_parent = {}
        if root in self.local:
            self.place_fragment(root)
            queue.extend(sorted(self.local[root]))
        else:
            self.pos[root] = np.zeros(3)
            queue.append(root)
        while queue:
            u = queue.popleft()
            todo = [v for v, _ in mol.neighbors[u] if v not in self.pos]
            if not todo:
                continue
            placed_nbrs = [j for j, _ in mol.neighbors[u] if j in self.pos]
            dirs = [_unit(self.pos[j] - self.pos[u]) for j in placed_nbrs]
            hyb = hybridization(mol, u)
            template = _TEMPLATES[_template_size(mol, u, hyb)]
            ref_perp = None
            if len(placed_nbrs) == 1:
                w = placed_nbrs[0]
                x = self._reference(w, u)
                if x is not None:
                    ref_perp = self.pos[x] - self.pos[w]
                    self.torsions.append((w, u, x, todo[0], self._is_double(w, u)))
            slots = _free_slots(template, dirs, ref_perp)
            if len(slots) < len(todo):
                extra = self._spread(dirs + slots, len(todo) - len(slots))
                slots = list(slots) + extra
            for v, d in zip(todo, slots):
                d = _unit(np.asarray(d))
                key = self.frag_of[v]
                if key in self.local:
                    x = self._reference(u, v)
                    self.place_fragment(key, attach=v, parent=u, direction=d, ref=x)
                    queue.extend(a for a in sorted(self.local[key]))
                else:
                    self.pos[v] = self.pos[u] + _bond_len(mol, u, v) * d
                    tree_parent[v] = u
                    queue.append(v)
        return np.array([self.pos[i] for i in range(len(mol.atoms))])

    def _reference(self, w, v):
        """A placed neighbour of ``w`` other than ``v`` (dihedral reference)."""
        for j, _ in self.mol.neighbors[w]:
            if j != v and j in self.pos:
                return j
        return None

    def _spread(self, used, count):
        golden = np.pi * (3 - np.sqrt(5))
        cands = []
        for t in range(64):
            z = 1 - 2 * (t + 0.5) / 64
            r = np.sqrt(1 - z * z)
            cands.append(np.array([r * np.cos(golden * t), r * np.sin(golden * t), z]))
        chosen = []
        for _ in range(count):
            pool = [np.asarray(u) for u in used] + chosen
            best = max(cands, key=lambda c: min(np.linalg.norm(c - p) for p in pool) if pool else 0)
            chosen.append(best)
        return chosen


# --------------------------------------------------------------------------- public API


def _downstream(mol, w, v):
    seen = {v}
    stack = [v]
    while stack:
        a = stack.pop()
        for j, _ in mol.neighbors[a]:
            if (a == v and j == w) or j in seen:
                continue
            seen.add(j)
            stack.append(j)
    return np.array(sorted(seen))


def _apply(base, torsions, values):
    xyz = base.copy()
    for (w, v, down), phi in zip(torsions, values):
        delta = phi - 180.0
        if delta == 0.0:
            continue
        rot = _rotation_about(xyz[v] - xyz[w], np.radians(delta))
        xyz[down] = (xyz[down] - xyz[v]) @ rot.T + xyz[v]
    return xyz


def clash_score(xyz, pairs):
    if len(pairs) == 0:
        return 0.0
    d2 = np.sum((xyz[pairs[:, 0]] - xyz[pairs[:, 1]]) ** 2, axis=1)
    return float(np.sum(1.0 / np.maximum(d2, 1e-6)))


def check_geometry(mol: Molecule, xyz, tol=TOL_BOND, min_dist=MIN_NONBONDED):
    """True when bond lengths match the table and no non-bonded pair is too close."""
    xyz = np.asarray(xyz)
    for b in mol.bonds:
        if abs(np.linalg.norm(xyz[b.a] - xyz[b.b]) - _bond_len(mol, b.a, b.b)) > tol:
            return False
    n = len(xyz)
    if n < 2:
        return True
    diff = xyz[:, None, :] - xyz[None, :, :]
    d = np.sqrt(np.sum(diff ** 2, axis=-1))
    bonded = np.eye(n, dtype=bool)
    for b in mol.bonds:
        bonded[b.a, b.b] = bonded[b.b, b.a] = True
    return bool(np.all(d[~bonded] >= min_dist))


def _assignments(grids, budget, rng):
    total = 1
    for g in grids:
        total *= len(g)
    if total <= budget:
        return [tuple(c) for c in itertools.product(*grids)]
    out = [tuple(g[0] for g in grids)]
    seen = {out[0]}
    tries = 0
    while len(out) < budget and tries < budget * 50:
        tries += 1
        cand = tuple(g[int(rng.integers(len(g)))] for g in grids)
        if cand not in seen:
            seen.add(cand)
            out.append(cand)
    return out


def embed_conformers(mol: Molecule, n: int = 5, seed: int = 0, budget: int = BUDGET):
    """Up to ``n`` distinct low-clash conformers (fewer if the torsion grid is smaller)."""
    if len(mol.atoms) == 0:
        raise EmbeddingError("empty molecule")
    if not mol.is_connected():
        raise EmbeddingError("molecule is not connected")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    builder = _Builder(mol, rng)
    base = builder.build()

    torsions, grids = [], []
    for w, v, x, y, double in builder.torsions:
        if x is None or y is None:
            continue
        if hybridization(mol, w) == "sp" or hybridization(mol, v) == "sp":
            continue
        torsions.append((w, v, _downstream(mol, w, v)))
        grids.append(DOUBLE_GRID if double else SINGLE_GRID)

    natoms = len(mol.atoms)
    adj = np.zeros((natoms, natoms))
    for b in mol.bonds:
        adj[b.a, b.b] = adj[b.b, b.a] = 1
    topo = shortest_path(adj, unweighted=True, directed=False)
    iu = np.triu_indices(natoms, 1)
    mask = topo[iu] >= 3
    pairs = np.stack([iu[0][mask], iu[1][mask]], axis=1)

    scored = []
    for values in _assignments(grids, budget, rng):
        xyz = _apply(base, torsions, values)
        scored.append((clash_score(xyz, pairs), values, xyz))
    scored.sort(key=lambda t: (t[0], t[1]))

    out = []
    for _, values, xyz in scored:
        if not check_geometry(mol, xyz):
            xyz = refine(mol, list(range(natoms)), xyz)
            if not check_geometry(mol, xyz):
                continue
        out.append(mol.with_coords(xyz))
        if len(out) == n:
            break
    if not out:
        raise EmbeddingError(f"no valid conformer within the budget of {budget} torsion assignments")
    return out


def embed_3d(mol: Molecule, seed: int = 0) -> Molecule:
    """Lowest-clash conformer; deterministic for a given seed."""
    return embed_conformers(mol, 1, seed)[0]
