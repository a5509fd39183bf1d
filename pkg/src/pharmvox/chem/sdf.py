"""V2000 molfile / SD file reading and writing."""

from __future__ import annotations

import io
import os

import numpy as np

from .molecule import AROMATIC, ChemError, Molecule
from .perception import RawAtom, assemble, kekulize

# atom-block charge codes
_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}
_CODE_FOR_CHARGE = {3: 1, 2: 2, 1: 3, 0: 0, -1: 5, -2: 6, -3: 7}


class SdfError(ChemError):
    pass


def _int_field(line, start, stop, what, lineno):
    text = line[start:stop].strip()
    try:
        return int(text) if text else 0
    except ValueError:
        raise SdfError(f"line {lineno}: malformed {what} field {line[start:stop]!r}") from None


def _parse_record(lines, first_lineno):
    if len(lines) < 4:
        raise SdfError(f"record at line {first_lineno}: too short for a molfile header")
    name = lines[0].strip()
    counts = lines[3]
    counts_no = first_lineno + 3
    if "V3000" in counts:
        raise SdfError(f"line {counts_no}: V3000 records are not supported")
    natoms = _int_field(counts, 0, 3, "atom count", counts_no)
    nbonds = _int_field(counts, 3, 6, "bond count", counts_no)
    if len(counts.strip()) == 0 or natoms < 0 or nbonds < 0:
        raise SdfError(f"line {counts_no}: malformed counts line")

    body = lines[4:]
    if len(body) < natoms + nbonds:
        raise SdfError(
            f"record at line {first_lineno}: counts line declares {natoms} atoms and {nbonds} bonds "
            f"but only {len(body)} lines follow"
        )
    raw_atoms = []
    coords = np.zeros((natoms, 3))
    for k in range(natoms):
        line = body[k]
        lineno = counts_no + 1 + k
        try:
            coords[k] = [float(line[0:10]), float(line[10:20]), float(line[20:30])]
            symbol = line[31:34].strip()
        except ValueError:
            raise SdfError(f"line {lineno}: malformed atom line") from None
        if not symbol or not symbol[0].isalpha():
            raise SdfError(f"line {lineno}: malformed atom line (expected element symbol)")
        code = _int_field(line, 36, 39, "charge", lineno)
        raw_atoms.append(RawAtom(symbol, _CHARGE_CODES.get(code, 0)))

    raw_bonds = []
    for k in range(nbonds):
        line = body[natoms + k]
        lineno = counts_no + 1 + natoms + k
        a = _int_field(line, 0, 3, "bond atom", lineno) - 1
        b = _int_field(line, 3, 6, "bond atom", lineno) - 1
        order = _int_field(line, 6, 9, "bond type", lineno)
        if not (0 <= a < natoms and 0 <= b < natoms):
            raise SdfError(f"line {lineno}: bond references atom outside 1..{natoms}")
        if order not in (1, 2, 3, AROMATIC):
            raise SdfError(f"line {lineno}: unsupported bond type {order}")
        raw_bonds.append((a, b, order, None))

    charges = {}
    for k, line in enumerate(body[natoms + nbonds:]):
        if line.startswith("M  END"):
            break
        if line.startswith("M  CHG"):
            fields = line[6:].split()
            try:
                count = int(fields[0])
                values = [int(x) for x in fields[1:1 + 2 * count]]
            except (ValueError, IndexError):
                raise SdfError(f"line {counts_no + 1 + natoms + nbonds + k}: malformed M  CHG line") from None
            for idx, chg in zip(values[0::2], values[1::2]):
                charges[idx - 1] = chg
        elif line.startswith("M  ISO"):
            fields = line[6:].split()
            values = [int(x) for x in fields[1:]]
            for idx, iso in zip(values[0::2], values[1::2]):
                raw_atoms[idx - 1].isotope = iso
    if charges:
        # a CHG block supersedes all atom-block charges
        for ra in raw_atoms:
            ra.charge = 0
        for idx, chg in charges.items():
            if not 0 <= idx < natoms:
                raise SdfError(f"M  CHG references atom {idx + 1} outside 1..{natoms}")
            raw_atoms[idx].charge = chg

    for a, b, order, _ in raw_bonds:
        if order == AROMATIC:
            raw_atoms[a].aromatic = True
            raw_atoms[b].aromatic = True
    return assemble(raw_atoms, raw_bonds, coords=coords, name=name)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read().decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def iter_sdf(source):
    """Yield molecules (with coordinates) from a path or a text/byte stream."""
    text = _open_text(source)
    lines = text.splitlines()
    start = 0
    for i, line in enumerate(lines):
        if line.strip() == "$$$$":
            record = lines[start:i]
            if any(r.strip() for r in record):
                yield _parse_record(record, start + 1)
            start = i + 1
    tail = lines[start:]
    if any(r.strip() for r in tail):
        yield _parse_record(tail, start + 1)


def read_sdf(source):
    return list(iter_sdf(source))


def molblock(mol: Molecule) -> str:
    """V2000 block with Kekule bond orders (aromatic rings written as 1/2)."""
    kek = kekulize(mol)
    coords = mol.coords if mol.coords is not None else np.zeros((len(mol.atoms), 3))
    out = [mol.name, "  pharmvox          3D", ""]
    out.append(f"{len(kek.atoms):3d}{len(kek.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for atom, (x, y, z) in zip(kek.atoms, coords):
        code = _CODE_FOR_CHARGE.get(atom.charge, 0)
        out.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {atom.element:<3} 0{code:3d}  0  0  0  0  0  0  0  0  0  0")
    for bond in kek.bonds:
        out.append(f"{bond.a + 1:3d}{bond.b + 1:3d}{bond.order:3d}  0")
    charged = [(i + 1, a.charge) for i, a in enumerate(kek.atoms) if a.charge]
    for s in range(0, len(charged), 8):
        chunk = charged[s:s + 8]
        out.append(f"M  CHG{len(chunk):3d}" + "".join(f" {i:3d} {c:3d}" for i, c in chunk))
    isos = [(i + 1, a.isotope) for i, a in enumerate(kek.atoms) if a.isotope is not None]
    for s in range(0, len(isos), 8):
        chunk = isos[s:s + 8]
        out.append(f"M  ISO{len(chunk):3d}" + "".join(f" {i:3d} {v:3d}" for i, v in chunk))
    out.append("M  END")
    return "\n".join(out) + "\n"


def write_sdf(mols, target):
    """Write molecules to a path or text stream; returns the number written."""
    text = "".join(molblock(m) + "$$$$\n" for m in mols)
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif isinstance(target, io.TextIOBase) or hasattr(target, "write"):
        target.write(text)
    return text.count("$$$$\n")
