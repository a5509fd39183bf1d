"""Pharmacophore feature perception: six feature channels plus a shape channel."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .chem.molecule import AROMATIC, ChemError, Molecule

CHANNELS = ("donor", "acceptor", "cation", "anion", "aromatic", "hydrophobe", "shape")
N_CHANNELS = len(CHANNELS)
SHAPE = CHANNELS.index("shape")
PHARMACOPHORE_CHANNELS = tuple(range(SHAPE))


@dataclass(frozen=True)
class PharmacophoreProfile:
    """Seven labelled point clouds in Angstrom, in ``CHANNELS`` order."""

    points: tuple  # of (N_c, 3) float arrays

    def __post_init__(self):
        if len(self.points) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channels, got {len(self.points)}")
        arrs = []
        for p in self.points:
            a = np.array(p, dtype=float).reshape(-1, 3)
            if not np.all(np.isfinite(a)):
                raise ValueError("profile coordinates must be finite")
            a.setflags(write=False)
            arrs.append(a)
        object.__setattr__(self, "points", tuple(arrs))

    def __getitem__(self, channel):
        if isinstance(channel, str):
            channel = CHANNELS.index(channel)
        return self.points[channel]

    @property
    def counts(self):
        return tuple(len(p) for p in self.points)

    def shape_centroid(self):
        shape = self.points[SHAPE]
        if len(shape) == 0:
            raise ValueError("empty shape channel")
        return shape.mean(axis=0)

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0), center=None):
        """Apply x -> R (x - c) + c + t to every channel (c defaults to the origin)."""
        rot = np.asarray(rotation, float)
        t = np.asarray(translation, float)
        c = np.zeros(3) if center is None else np.asarray(center, float)
        return PharmacophoreProfile(tuple((p - c) @ rot.T + c + t for p in self.points))

    def flat(self):
        """(all points, channel label per point)."""
        pts = np.concatenate([p for p in self.points], axis=0) if sum(self.counts) else np.zeros((0, 3))
        labels = np.concatenate([np.full(len(p), c, dtype=int) for c, p in enumerate(self.points)])
        return pts, labels

    def to_dict(self):
        return {name: self.points[c].tolist() for c, name in enumerate(CHANNELS)}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channels {sorted(unknown)}")
        return cls(tuple(np.asarray(data.get(name, []), float).reshape(-1, 3) for name in CHANNELS))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _is_hetero(atom):
    return atom.element not in ("C", "H")


def _double_bonded_to(mol, i, elements):
    for j, k in mol.neighbors[i]:
        if mol.bonds[k].order == 2 and mol.atoms[j].element in elements:
            return True
    return False


def _is_amide_n(mol, i):
    for j, k in mol.neighbors[i]:
        if mol.atoms[j].element == "C" and mol.bonds[k].order == 1 and _double_bonded_to(mol, j, ("O", "S")):
            return True
    return False


def _has_negative_neighbor(mol, i):
    return any(mol.atoms[j].charge < 0 for j, _ in mol.neighbors[i])


def _has_positive_neighbor(mol, i):
    return any(mol.atoms[j].charge > 0 for j, _ in mol.neighbors[i])


def _is_guanidine_c(mol, i):
    atom = mol.atoms[i]
    if atom.element != "C" or atom.aromatic:
        return False
    nbrs = mol.neighbors[i]
    if len(nbrs) != 3 or any(mol.atoms[j].element != "N" for j, _ in nbrs):
        return False
    return any(mol.bonds[k].order == 2 for _, k in nbrs)


def _is_basic_amine(mol, i):
    atom = mol.atoms[i]
    if atom.element != "N" or atom.charge != 0 or atom.aromatic:
        return False
    if mol.degree(i) + atom.hcount != 3:
        return False
    for j, k in mol.neighbors[i]:
        if mol.bonds[k].order != 1:
            return False
        nb = mol.atoms[j]
        if nb.aromatic or nb.element not in ("C", "H"):
            return False
        # carbonyl, imine or alkene carbon: amide, amidine or enamine
        if any(mol.bonds[kk].order in (2, 3, AROMATIC) for _, kk in mol.neighbors[j]):
            return False
    return True


def _acid_oxygens(mol):
    """Oxygens of carboxylic acids and carboxylates."""
    out = []
    for i, atom in enumerate(mol.atoms):
        if atom.element != "C" or atom.aromatic:
            continue
        oxy = [(j, mol.bonds[k].order) for j, k in mol.neighbors[i] if mol.atoms[j].element == "O"]
        if len(oxy) != 2 or mol.degree(i) != 3:
            continue
        (o1, b1), (o2, b2) = oxy
        if sorted((b1, b2)) != [1, 2]:
            continue
        single = o1 if b1 == 1 else o2
        s_atom = mol.atoms[single]
        if mol.degree(single) == 1 and (s_atom.hcount == 1 or s_atom.charge == -1):
            out.extend(sorted((o1, o2)))
    return out


def _tetrazole_nitrogens(mol):
    out = []
    for ring in mol.aromatic_rings:
        if len(ring) == 5 and sum(mol.atoms[a].element == "N" for a in ring) == 4:
            out.extend(sorted(a for a in ring if mol.atoms[a].element == "N"))
    return out


def _hydrophobe_runs(mol):
    ok = [
        a.element == "C" and not a.aromatic and not any(_is_hetero(mol.atoms[j]) for j, _ in mol.neighbors[i])
        for i, a in enumerate(mol.atoms)
    ]
    seen = set()
    runs = []
    for start in range(len(mol.atoms)):
        if not ok[start] or start in seen:
            continue
        run = []
        stack = [start]
        seen.add(start)
        while stack:
            i = stack.pop()
            run.append(i)
            for j, _ in mol.neighbors[i]:
                if ok[j] and j not in seen:
                    seen.add(j)
                    stack.append(j)
        runs.append(sorted(run))
    return runs


def feature_groups(mol: Molecule):
    """Per channel, the atom groups whose centroids become feature points."""
    groups = {name: [] for name in CHANNELS}
    for i, atom in enumerate(mol.atoms):
        el = atom.element
        if el in ("N", "O") and atom.hcount > 0:
            groups["donor"].append((i,))
        if el == "O" and atom.charge <= 0:
            groups["acceptor"].append((i,))
        elif el == "N" and atom.charge <= 0:
            pyrrole_type = atom.aromatic and (atom.hcount > 0 or mol.degree(i) == 3)
            if not pyrrole_type and not _is_amide_n(mol, i):
                groups["acceptor"].append((i,))
        if el == "N" and atom.charge > 0 and not _has_negative_neighbor(mol, i):
            groups["cation"].append((i,))
        elif _is_basic_amine(mol, i):
            groups["cation"].append((i,))
        elif _is_guanidine_c(mol, i):
            groups["cation"].append((i,))
        if el in ("O", "S") and atom.charge < 0 and not _has_positive_neighbor(mol, i):
            groups["anion"].append((i,))
        if el != "H":
            groups["shape"].append((i,))
    marked = {g[0] for g in groups["anion"]}
    for i in _acid_oxygens(mol) + _tetrazole_nitrogens(mol):
        if i not in marked:
            groups["anion"].append((i,))
            marked.add(i)
    groups["anion"].sort()
    groups["aromatic"] = [tuple(r) for r in mol.aromatic_rings]
    groups["hydrophobe"] = [tuple(r) for r in _hydrophobe_runs(mol)]
    return groups


def perceive(mol: Molecule) -> PharmacophoreProfile:
    """Pharmacophore-shape profile of a molecule with coordinates."""
    if mol.coords is None:
        raise ChemError("perception needs 3D coordinates")
    xyz = mol.coords
    groups = feature_groups(mol)
    pts = []
    for name in CHANNELS:
        g = groups[name]
        pts.append(np.array([xyz[list(atoms)].mean(axis=0) for atoms in g]).reshape(-1, 3))
    return PharmacophoreProfile(tuple(pts))
