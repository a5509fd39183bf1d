"""SMILES reading and (canonical) writing."""

from __future__ import annotations

import re
import sys

from .canon import canonical_ranks
from .molecule import AROMATIC, Molecule, SmilesSyntaxError, UnsupportedElementError
from .perception import RawAtom, aromatic_implicit_h, assemble, default_implicit_h
from .tables import SUPPORTED_ELEMENTS

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S", "se": "Se", "si": "Si"}
BOND_CHARS = {"-": 1, "=": 2, "#": 3, ":": AROMATIC, "/": 1, "\\": 1}

_BRACKET = re.compile(
    r"^(?P<iso>\d+)?"
    r"(?P<sym>se|si|as|te|[bcnops]|[A-Z][a-z]?|\*)"
    r"(?P<chi>@@|@(?:TH[12]|AL[12]|SP[123]|TB\d{1,2}|OH\d{1,2})?)?"
    r"(?P<h>H\d*)?"
    r"(?P<chg>\+\+|--|[+-]\d*)?"
    r"(?::(?P<cls>\d+))?$"
)

sys.setrecursionlimit(max(sys.getrecursionlimit(), 10000))


def _parse_bracket(body, pos):
    m = _BRACKET.match(body)
    if m is None:
        raise SmilesSyntaxError(f"malformed bracket atom [{body}] at position {pos}")
    sym = m.group("sym")
    aromatic = sym[0].islower()
    if aromatic:
        if sym not in AROMATIC_BRACKET:
            raise UnsupportedElementError(f"unsupported aromatic element {sym!r}")
        element = AROMATIC_BRACKET[sym]
    else:
        element = sym
    if element not in SUPPORTED_ELEMENTS:
        raise UnsupportedElementError(f"unsupported element {element!r}")
    h = m.group("h")
    hcount = 0 if h is None else (int(h[1:]) if len(h) > 1 else 1)
    chg = m.group("chg")
    if chg is None:
        charge = 0
    elif chg in ("++", "--"):
        charge = 2 if chg == "++" else -2
    else:
        mag = int(chg[1:]) if len(chg) > 1 else 1
        charge = mag if chg[0] == "+" else -mag
    iso = m.group("iso")
    return RawAtom(element, charge, hcount, aromatic, int(iso) if iso else None, m.group("chi"))


def parse_smiles(text: str, name: str = "") -> Molecule:
    """Parse a SMILES string into a perceived heavy-atom ``Molecule``.

    Raises ``SmilesSyntaxError`` for grammar violations,
    ``UnsupportedElementError`` and ``ValenceError`` for chemistry problems.
    """
    if not isinstance(text, str) or not text.strip():
        raise SmilesSyntaxError("empty SMILES")
    text = text.strip()
    if not text.isascii():
        raise SmilesSyntaxError("SMILES must be ASCII")

    atoms = []
    bonds = []
    bonded = set()
    prev = None
    pending = None  # (order, stereo) or None
    branches = []  # (atom, number of atoms when the branch opened)
    open_rings = {}
    i = 0
    n = len(text)

    def implicit_order(a, b):
        return AROMATIC if atoms[a].aromatic and atoms[b].aromatic else 1

    def add_bond(a, b, spec, pos):
        key = frozenset((a, b))
        if a == b:
            raise SmilesSyntaxError(f"ring closure to the same atom at position {pos}")
        if key in bonded:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b} at position {pos}")
        bonded.add(key)
        order, stereo = spec if spec is not None else (implicit_order(a, b), None)
        bonds.append((a, b, order, stereo))

    def add_atom(raw, pos):
        nonlocal prev, pending
        atoms.append(raw)
        idx = len(atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending, pos)
        elif pending is not None:
            raise SmilesSyntaxError(f"bond without a preceding atom at position {pos}")
        pending = None
        prev = idx

    while i < n:
        c = text[i]
        if c == "[":
            j = text.find("]", i)
            if j < 0:
                raise SmilesSyntaxError(f"unclosed bracket at position {i}")
            add_atom(_parse_bracket(text[i + 1:j], i), i)
            i = j + 1
            continue
        if c in "BC" and text[i:i + 2] in ("Br", "Cl"):
            add_atom(RawAtom(text[i:i + 2]), i)
            i += 2
            continue
        if c in ORGANIC:
            add_atom(RawAtom(c), i)
        elif c in AROMATIC_ORGANIC:
            add_atom(RawAtom(AROMATIC_ORGANIC[c], aromatic=True), i)
        elif c == "(":
            if prev is None:
                raise SmilesSyntaxError(f"branch without a preceding atom at position {i}")
            if pending is not None:
                raise SmilesSyntaxError(f"bond symbol before branch at position {i}")
            branches.append((prev, len(atoms)))
        elif c == ")":
            if not branches:
                raise SmilesSyntaxError(f"unbalanced ')' at position {i}")
            if pending is not None:
                raise SmilesSyntaxError(f"dangling bond before ')' at position {i}")
            prev, count = branches.pop()
            if count == len(atoms):
                raise SmilesSyntaxError(f"empty branch at position {i}")
        elif c in BOND_CHARS:
            if pending is not None:
                raise SmilesSyntaxError(f"consecutive bond symbols at position {i}")
            if prev is None:
                raise SmilesSyntaxError(f"bond without a preceding atom at position {i}")
            pending = (BOND_CHARS[c], c if c in "/\\" else None)
        elif c == "$":
            raise SmilesSyntaxError("quadruple bonds are not supported")
        elif c == ".":
            if pending is not None:
                raise SmilesSyntaxError(f"dangling bond before '.' at position {i}")
            if branches:
                raise SmilesSyntaxError(f"'.' inside a branch at position {i}")
            prev = None
        elif c.isdigit() or c == "%":
            if c == "%":
                digits = text[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise SmilesSyntaxError(f"malformed %nn ring number at position {i}")
                rnum = int(digits)
                step = 3
            else:
                rnum = int(c)
                step = 1
            if prev is None:
                raise SmilesSyntaxError(f"ring number without an atom at position {i}")
            if rnum in open_rings:
                other, spec = open_rings.pop(rnum)
                if spec is not None and pending is not None and spec[0] != pending[0]:
                    raise SmilesSyntaxError(f"conflicting ring-closure bond orders at position {i}")
                add_bond(other, prev, pending if pending is not None else spec, i)
            else:
                open_rings[rnum] = (prev, pending)
            pending = None
            i += step
            continue
        elif c.isalpha() or c == "*":
            raise UnsupportedElementError(f"unsupported atom symbol {c!r} at position {i}")
        else:
            raise SmilesSyntaxError(f"unexpected character {c!r} at position {i}")
        i += 1

    if pending is not None:
        raise SmilesSyntaxError("SMILES ends with a bond symbol")
    if branches:
        raise SmilesSyntaxError("unclosed parenthesis")
    if open_rings:
        raise SmilesSyntaxError(f"unclosed ring bond(s) {sorted(open_rings)}")
    if not atoms:
        raise SmilesSyntaxError("no atoms")
    return assemble(atoms, bonds, name=name)


# --------------------------------------------------------------------------- writer


def _atom_token(mol, i):
    atom = mol.atoms[i]
    bond_sum = 0
    for _, k in mol.neighbors[i]:
        order = mol.bonds[k].order
        bond_sum += 1 if order == AROMATIC else order
    symbol = atom.element.lower() if atom.aromatic else atom.element
    bare_ok = atom.charge == 0 and atom.isotope is None
    if bare_ok:
        if atom.aromatic:
            bare_ok = symbol in AROMATIC_ORGANIC and aromatic_implicit_h(atom.element, 0, bond_sum) == atom.hcount
        else:
            try:
                bare_ok = atom.element in ORGANIC and default_implicit_h(atom.element, 0, bond_sum) == atom.hcount
            except ValueError:
                bare_ok = False
    if bare_ok:
        return symbol
    out = "["
    if atom.isotope is not None:
        out += str(atom.isotope)
    out += symbol
    if atom.hcount:
        out += "H" if atom.hcount == 1 else f"H{atom.hcount}"
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        out += sign if abs(atom.charge) == 1 else f"{sign}{abs(atom.charge)}"
    return out + "]"


def _bond_token(mol, bond):
    if bond.order == AROMATIC:
        return ""
    if bond.order == 2:
        return "="
    if bond.order == 3:
        return "#"
    if mol.atoms[bond.a].aromatic and mol.atoms[bond.b].aromatic:
        return "-"
    return ""


def _ring_label(d):
    return str(d) if d < 10 else f"%{d:02d}"


def write_smiles(mol: Molecule, ranks=None) -> str:
    """Write ``mol`` as SMILES, traversing atoms in ``ranks`` order.

    With ``ranks=None`` the atom index order is used (a non-canonical but
    valid string). Stereo annotations are not written.
    """
    n = len(mol.atoms)
    if n == 0:
        return ""
    if ranks is None:
        ranks = list(range(n))
    sorted_nbrs = [sorted(mol.neighbors[i], key=lambda t: ranks[t[0]]) for i in range(n)]

    visited = [False] * n
    children = [[] for _ in range(n)]
    closures = [[] for _ in range(n)]  # partner atoms joined by ring-closure bonds
    closure_set = set()

    def dfs(v, parent):
        visited[v] = True
        for w, _ in sorted_nbrs[v]:
            if w == parent:
                continue
            if visited[w]:
                key = frozenset((v, w))
                if key not in closure_set:
                    closure_set.add(key)
                    closures[v].append(w)
                    closures[w].append(v)
            else:
                children[v].append(w)
                dfs(w, v)

    starts = []
    for comp in mol.components:
        start = min(comp, key=lambda a: ranks[a])
        starts.append(start)
        dfs(start, -1)
    starts.sort(key=lambda a: ranks[a])

    digits = {}  # frozenset(edge) -> digit
    free = list(range(1, 100))
    out = []

    def emit(v):
        out.append(_atom_token(mol, v))
        released = []
        for w in sorted(closures[v], key=lambda a: ranks[a]):
            key = frozenset((v, w))
            if key in digits:
                d = digits.pop(key)
                out.append(_ring_label(d))
                released.append(d)
            else:
                d = free.pop(0)
                digits[key] = d
                out.append(_bond_token(mol, mol.bond_between(v, w)) + _ring_label(d))
        for d in released:
            free.append(d)
        free.sort()
        kids = children[v]
        for idx, w in enumerate(kids):
            token = _bond_token(mol, mol.bond_between(v, w))
            if idx < len(kids) - 1:
                out.append("(" + token)
                emit(w)
                out.append(")")
            else:
                out.append(token)
                emit(w)

    pieces = []
    for start in starts:
        out = []
        emit(start)
        pieces.append("".join(out))
    return ".".join(pieces)


def write_canonical_smiles(mol: Molecule) -> str:
    """Canonical SMILES: identical for every atom numbering of the same graph."""
    return write_smiles(mol, canonical_ranks(mol))


def canonical_smiles(text: str) -> str:
    return write_canonical_smiles(parse_smiles(text))
