"""Small graph edits on Kekule forms, re-perceived afterwards."""

from __future__ import annotations

from dataclasses import replace

from .molecule import Bond, ValenceError
from .perception import free_valence, kekulize, rebuild


def remove_atoms(mol, drop):
    """Delete atoms, giving each surviving neighbour one H per removed bond order."""
    drop = set(drop)
    kek = kekulize(mol)
    extra = [0] * len(kek.atoms)
    for b in kek.bonds:
        if (b.a in drop) != (b.b in drop):
            keep = b.b if b.a in drop else b.a
            extra[keep] += b.order
    keep = [i for i in range(len(kek.atoms)) if i not in drop]
    remap = {old: new for new, old in enumerate(keep)}
    atoms = [replace(kek.atoms[i], hcount=kek.atoms[i].hcount + extra[i]) for i in keep]
    bonds = [replace(b, a=remap[b.a], b=remap[b.b]) for b in kek.bonds if b.a not in drop and b.b not in drop]
    coords = None if mol.coords is None else mol.coords[keep]
    return rebuild(mol, atoms, bonds, coords)


def join(mol_a, ia, mol_b, ib, order=1, name=None):
    """Bond atom ``ia`` of ``mol_a`` to atom ``ib`` of ``mol_b``, consuming hydrogens on both."""
    ka, kb = kekulize(mol_a), kekulize(mol_b)
    for mol, i in ((ka, ia), (kb, ib)):
        if mol.atoms[i].hcount < order:
            raise ValenceError(f"atom {i} has {mol.atoms[i].hcount} H, cannot form an order-{order} bond")
    off = len(ka.atoms)
    atoms = list(ka.atoms) + list(kb.atoms)
    atoms[ia] = replace(atoms[ia], hcount=atoms[ia].hcount - order)
    atoms[off + ib] = replace(atoms[off + ib], hcount=atoms[off + ib].hcount - order)
    bonds = list(ka.bonds) + [replace(b, a=b.a + off, b=b.b + off) for b in kb.bonds]
    bonds.append(Bond(ia, off + ib, order))
    return rebuild(ka, atoms, bonds, None, name if name is not None else ka.name)


def substitute(mol, i, element, charge=0):
    """Change the element of atom ``i`` keeping its bonds; H count re-derived from valence."""
    kek = kekulize(mol)
    used = sum(kek.bonds[k].order for _, k in kek.neighbors[i])
    h = free_valence(element, charge, used)
    if h < 0:
        raise ValenceError(f"{element} cannot carry bond order sum {used}")
    atoms = list(kek.atoms)
    atoms[i] = replace(atoms[i], element=element, charge=charge, hcount=h)
    return rebuild(mol, atoms, list(kek.bonds), None)
