"""Molecular graph, SMILES/SDF I/O, perception, tokenization and 3D embedding."""

from .molecule import (
    AROMATIC,
    Atom,
    AromaticityError,
    Bond,
    ChemError,
    Molecule,
    SmilesSyntaxError,
    UnsupportedElementError,
    ValenceError,
)
from .perception import kekulize
from .smiles import canonical_smiles, parse_smiles, write_canonical_smiles, write_smiles
