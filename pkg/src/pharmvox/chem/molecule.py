"""Attributed molecular graph with an optional single 3D conformation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

AROMATIC = 4  # bond order code, same as the MDL bond type


class ChemError(ValueError):
    """Base class for chemistry input errors."""


class SmilesSyntaxError(ChemError):
    pass


class UnsupportedElementError(ChemError):
    pass


class ValenceError(ChemError):
    pass


class AromaticityError(ValenceError):
    """Aromatic input that admits no Kekule structure."""


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    hcount: int = 0
    aromatic: bool = False
    isotope: Optional[int] = None
    chirality: Optional[str] = None  # kept as annotation, never interpreted


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: int  # 1, 2, 3 or AROMATIC
    stereo: Optional[str] = None  # '/' or '\\' annotation

    def other(self, i):
        return self.b if i == self.a else self.a


@dataclass(frozen=True, eq=False)
class Molecule:
    """Heavy-atom graph; hydrogens live in ``Atom.hcount``.

    Instances are treated as immutable. Derived data (adjacency, rings) is
    computed lazily and cached.
    """

    atoms: tuple
    bonds: tuple
    coords: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n) or bond.a == bond.b:
                raise ChemError(f"bond ({bond.a}, {bond.b}) has invalid endpoints")
            key = frozenset((bond.a, bond.b))
            if key in seen:
                raise ChemError(f"duplicate bond between {bond.a} and {bond.b}")
            seen.add(key)
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=float)
            if coords.shape != (n, 3):
                raise ChemError(f"coords shape {coords.shape} does not match {n} atoms")
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    def __len__(self):
        return len(self.atoms)

    @property
    def num_atoms(self):
        return len(self.atoms)

    @cached_property
    def neighbors(self):
        """Per atom, list of (neighbor index, bond index) sorted by neighbor."""
        nbrs = [[] for _ in self.atoms]
        for k, bond in enumerate(self.bonds):
            nbrs[bond.a].append((bond.b, k))
            nbrs[bond.b].append((bond.a, k))
        for lst in nbrs:
            lst.sort()
        return nbrs

    @cached_property
    def bond_lookup(self):
        return {frozenset((b.a, b.b)): k for k, b in enumerate(self.bonds)}

    def bond_between(self, i, j) -> Optional[Bond]:
        k = self.bond_lookup.get(frozenset((i, j)))
        return None if k is None else self.bonds[k]

    def degree(self, i):
        return len(self.neighbors[i])

    @cached_property
    def rings(self):
        """Smallest set of smallest rings, each a tuple of atoms in cyclic order."""
        from .perception import sssr

        return sssr(len(self.atoms), [(b.a, b.b) for b in self.bonds])

    @cached_property
    def ring_bond_flags(self):
        from .perception import ring_bond_mask

        return ring_bond_mask(len(self.atoms), [(b.a, b.b) for b in self.bonds])

    @cached_property
    def ring_atom_flags(self):
        flags = [False] * len(self.atoms)
        for k, bond in enumerate(self.bonds):
            if self.ring_bond_flags[k]:
                flags[bond.a] = flags[bond.b] = True
        return flags

    def is_ring_atom(self, i):
        return self.ring_atom_flags[i]

    @cached_property
    def aromatic_rings(self):
        return [r for r in self.rings if all(self.atoms[i].aromatic for i in r)
                and all(self.bond_between(r[k], r[(k + 1) % len(r)]).order == AROMATIC
                        for k in range(len(r)))]

    @cached_property
    def components(self):
        seen = [-1] * len(self.atoms)
        comps = []
        for start in range(len(self.atoms)):
            if seen[start] >= 0:
                continue
            stack = [start]
            seen[start] = len(comps)
            members = []
            while stack:
                i = stack.pop()
                members.append(i)
                for j, _ in self.neighbors[i]:
                    if seen[j] < 0:
                        seen[j] = len(comps)
                        stack.append(j)
            comps.append(sorted(members))
        return comps

    def is_connected(self):
        return len(self.components) <= 1

    def heavy_atom_indices(self):
        return [i for i, a in enumerate(self.atoms) if a.element != "H"]

    def with_coords(self, coords) -> "Molecule":
        return Molecule(self.atoms, self.bonds, None if coords is None else np.array(coords, float), self.name)

    def with_name(self, name) -> "Molecule":
        return Molecule(self.atoms, self.bonds, self.coords, name)

    def permute(self, order: Sequence[int]) -> "Molecule":
        """Renumber atoms: new atom ``k`` is old atom ``order[k]``."""
        order = list(order)
        if sorted(order) != list(range(len(self.atoms))):
            raise ValueError("order must be a permutation of atom indices")
        inverse = {old: new for new, old in enumerate(order)}
        atoms = tuple(self.atoms[old] for old in order)
        bonds = tuple(replace(b, a=inverse[b.a], b=inverse[b.b]) for b in self.bonds)
        coords = None if self.coords is None else self.coords[order]
        return Molecule(atoms, bonds, coords, self.name)

    def formula_counts(self):
        counts = {}
        for atom in self.atoms:
            counts[atom.element] = counts.get(atom.element, 0) + 1
            if atom.hcount:
                counts["H"] = counts.get("H", 0) + atom.hcount
        return counts

    def __repr__(self):
        return f"Molecule(name={self.name!r}, atoms={len(self.atoms)}, bonds={len(self.bonds)}, 3d={self.coords is not None})"
