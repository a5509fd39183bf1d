"""Circular fingerprints, Tanimoto search over a library index, and Murcko scaffolds."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .chem.edit import remove_atoms
from .chem.molecule import Molecule
from .chem.sdf import iter_sdf, molblock
from .chem.smiles import parse_smiles, write_canonical_smiles
from .chem.tables import atomic_number
from .io_utils import atomic_write_bytes, atomic_write_text

PHIX_MAGIC = b"PHIX"
PHIX_VERSION = 1
_PHIX_HEADER = struct.Struct("<4sIIQ")
MASK64 = (1 << 64) - 1


# --------------------------------------------------------------------------- hashing


def splitmix64(x: int) -> int:
    """Finalizer of the SplitMix64 generator: a bijective 64-bit mixer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def hash_sequence(values) -> int:
    """Order-dependent 64-bit hash: h <- splitmix64(h xor v), starting from the length."""
    h = splitmix64(len(values))
    for v in values:
        h = splitmix64(h ^ (int(v) & MASK64))
    return h


def atom_invariant(mol: Molecule, i: int) -> int:
    a = mol.atoms[i]
    return hash_sequence((atomic_number(a.element), a.charge & 0xFF, mol.degree(i), a.hcount,
                          int(mol.is_ring_atom(i)), int(a.aromatic)))


def environment_ids(mol: Molecule, radius: int = 2):
    """Identifiers of every atom-centred environment for radii 0..radius (one list per radius)."""
    current = [atom_invariant(mol, i) for i in range(len(mol.atoms))]
    out = [list(current)]
    for r in range(1, radius + 1):
        nxt = []
        for i in range(len(mol.atoms)):
            nb = sorted((mol.bonds[k].order, current[j]) for j, k in mol.neighbors[i])
            flat = [r, current[i]]
            for order, h in nb:
                flat.extend((order, h))
            nxt.append(hash_sequence(flat))
        current = nxt
        out.append(list(current))
    return out


# --------------------------------------------------------------------------- fingerprints


@dataclass(frozen=True)
class Fingerprint:
    words: np.ndarray  # uint64, nbits / 64 words
    nbits: int

    def __post_init__(self):
        w = np.asarray(self.words, dtype=np.uint64)
        if self.nbits <= 0 or self.nbits & (self.nbits - 1) or self.nbits % 64:
            raise ValueError("nbits must be a power of two and >= 64")
        if w.shape != (self.nbits // 64,):
            raise ValueError("word array does not match nbits")
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    @classmethod
    def from_bits(cls, bits, nbits):
        words = np.zeros(nbits // 64, dtype=np.uint64)
        for b in bits:
            if not 0 <= b < nbits:
                raise ValueError(f"bit {b} outside 0..{nbits - 1}")
            words[b // 64] |= np.uint64(1) << np.uint64(b % 64)
        return cls(words, nbits)

    def on_bits(self):
        out = []
        for w, word in enumerate(self.words.tolist()):
            while word:
                low = word & -word
                out.append(w * 64 + low.bit_length() - 1)
                word ^= low
        return out

    @property
    def count(self):
        return int(np.bitwise_count(self.words).sum())

    def to_bytes(self):
        return self.words.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, data, nbits):
        return cls(np.frombuffer(data, dtype="<u8").astype(np.uint64), nbits)

    def __eq__(self, other):
        return isinstance(other, Fingerprint) and self.nbits == other.nbits and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.nbits, self.words.tobytes()))


def circular_fingerprint(mol: Molecule, radius: int = 2, nbits: int = 2048) -> Fingerprint:
    """Hashed circular (Morgan-style) fingerprint; identifiers folded modulo nbits."""
    if not 0 <= radius <= 4:
        raise ValueError("radius must be in 0..4")
    bits = {h % nbits for layer in environment_ids(mol, radius) for h in layer}
    return Fingerprint.from_bits(sorted(bits), nbits)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.nbits != b.nbits:
        raise ValueError(f"fingerprint lengths differ ({a.nbits} vs {b.nbits})")
    union = int(np.bitwise_count(a.words | b.words).sum())
    if union == 0:
        return 0.0
    return int(np.bitwise_count(a.words & b.words).sum()) / union


# --------------------------------------------------------------------------- index


class LibraryIndex:
    """Immutable exact-scan similarity index with an optional conformer store."""

    def __init__(self, ids, smiles, fingerprints, nbits=2048, radius=2, conformers=None):
        ids = [int(i) for i in ids]
        if len(set(ids)) != len(ids):
            raise ValueError("index ids must be unique")
        if not (len(ids) == len(smiles) == len(fingerprints)):
            raise ValueError("ids, smiles and fingerprints must have equal length")
        self.ids = np.array(ids, dtype=np.uint64)
        self.smiles = list(smiles)
        self.nbits = nbits
        self.radius = radius
        self.matrix = np.stack([fp.words for fp in fingerprints]) if fingerprints else np.zeros((0, nbits // 64), np.uint64)
        self.matrix.setflags(write=False)
        self._by_smiles = {}
        for k, s in enumerate(self.smiles):
            self._by_smiles.setdefault(s, []).append(k)
        self._pos = {i: k for k, i in enumerate(ids)}
        self.conformers = dict(conformers or {})

    def __len__(self):
        return len(self.smiles)

    @classmethod
    def build(cls, entries, radius=2, nbits=2048, conformers=None):
        """``entries``: iterable of (id, SMILES string or Molecule)."""
        ids, smiles, fps = [], [], []
        for ident, item in entries:
            mol = parse_smiles(item) if isinstance(item, str) else item
            ids.append(ident)
            smiles.append(write_canonical_smiles(mol))
            fps.append(circular_fingerprint(mol, radius, nbits))
        return cls(ids, smiles, fps, nbits, radius, conformers)

    def fingerprint(self, k) -> Fingerprint:
        return Fingerprint(self.matrix[k].copy(), self.nbits)

    def position(self, ident):
        return self._pos[int(ident)]

    def similarities(self, fp: Fingerprint):
        if fp.nbits != self.nbits:
            raise ValueError("query fingerprint length does not match the index")
        inter = np.bitwise_count(self.matrix & fp.words).sum(axis=1).astype(np.int64)
        union = np.bitwise_count(self.matrix | fp.words).sum(axis=1).astype(np.int64)
        sims = np.zeros(len(self), dtype=float)
        nz = union > 0
        sims[nz] = inter[nz] / union[nz]
        return sims

    def top_k(self, mol: Molecule, k: int, exclude_smiles=None):
        """Exact top-k (id, similarity), ties by ascending id, skipping the query's own structure."""
        if len(self) == 0:
            raise ValueError("index is empty")
        if k < 1:
            raise ValueError("k must be >= 1")
        canon = write_canonical_smiles(mol) if exclude_smiles is None else exclude_smiles
        sims = self.similarities(circular_fingerprint(mol, self.radius, self.nbits))
        order = np.lexsort((self.ids, -sims))
        excluded = set(self._by_smiles.get(canon, ()))
        out = []
        for pos in order:
            if pos in excluded:
                continue
            out.append((int(self.ids[pos]), float(sims[pos])))
            if len(out) == k:
                break
        return out

    # ------------------------------------------------------------------ files

    def to_bytes(self) -> bytes:
        parts = [_PHIX_HEADER.pack(PHIX_MAGIC, PHIX_VERSION, self.nbits, len(self))]
        for k in range(len(self)):
            s = self.smiles[k].encode("ascii")
            parts.append(struct.pack("<QI", int(self.ids[k]), len(s)))
            parts.append(s)
            parts.append(self.matrix[k].astype("<u8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, radius=2, conformers=None):
        if len(data) < _PHIX_HEADER.size:
            raise ValueError("truncated PHIX header")
        magic, version, nbits, count = _PHIX_HEADER.unpack_from(data)
        if magic != PHIX_MAGIC:
            raise ValueError("not a PHIX index (bad magic)")
        if version != PHIX_VERSION:
            raise ValueError(f"unsupported PHIX version {version}")
        off = _PHIX_HEADER.size
        nbytes = nbits // 8
        ids, smiles, fps = [], [], []
        for _ in range(count):
            ident, n = struct.unpack_from("<QI", data, off)
            off += 12
            smiles.append(data[off:off + n].decode("ascii"))
            off += n
            fps.append(Fingerprint.from_bytes(data[off:off + nbytes], nbits))
            off += nbytes
            ids.append(ident)
        if off != len(data):
            raise ValueError("trailing bytes in PHIX index")
        return cls(ids, smiles, fps, nbits, radius, conformers)

    def save(self, path):
        atomic_write_bytes(path, self.to_bytes())
        if self.conformers:
            blocks = []
            for ident in sorted(self.conformers):
                for conf in self.conformers[ident]:
                    blocks.append(molblock(conf.with_name(str(ident))) + "$$$$\n")
            atomic_write_text(conformer_path(path), "".join(blocks))

    @classmethod
    def load(cls, path, radius=2):
        with open(os.fspath(path), "rb") as fh:
            data = fh.read()
        conformers = {}
        side = conformer_path(path)
        if os.path.exists(side):
            for mol in iter_sdf(side):
                conformers.setdefault(int(mol.name), []).append(mol)
        return cls.from_bytes(data, radius, conformers)

    def alpha(self):
        """Mean stored conformers per entry that has any."""
        counts = [len(v) for v in self.conformers.values() if v]
        return float(np.mean(counts)) if counts else 0.0


def conformer_path(index_path):
    return os.fspath(index_path) + ".sdf"


# --------------------------------------------------------------------------- scaffolds


def murcko_scaffold(mol: Molecule) -> str:
    """Canonical SMILES of the ring systems plus linkers; "" for acyclic molecules."""
    if not mol.rings:
        return ""
    current = mol
    while True:
        terminal = [i for i in range(len(current.atoms))
                    if current.degree(i) <= 1 and not current.is_ring_atom(i)]
        if not terminal:
            break
        current = remove_atoms(current, terminal)
    return write_canonical_smiles(current)


def count_unique_scaffold_hits(hits) -> int:
    return len({murcko_scaffold(m) for m in hits})
