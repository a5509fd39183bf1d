"""Versioned chemistry tables shipped with the package (bond lengths, valences, tokenizer rule)."""

import json
from functools import lru_cache
from importlib import resources

SUPPORTED_ELEMENTS = frozenset({"C", "O", "N", "F", "S", "Cl", "Br", "P", "I", "B", "Se", "Si", "H"})


@lru_cache(maxsize=None)
def load_tables():
    with resources.files("pharmvox.chem").joinpath("data/chem_tables.json").open("r") as fh:
        return json.load(fh)


def atomic_number(element):
    return load_tables()["elements"][element]["number"]


def base_valences(element):
    return tuple(load_tables()["elements"][element]["valences"])


def allowed_valences(element, charge=0):
    """Valence states for ``element`` carrying formal ``charge``.

    Charges shift valence isoelectronically: N+ behaves like C, O- like F,
    B- like C, C+/C- both take three bonds.
    """
    vals = base_valences(element)
    if charge == 0:
        return vals
    if element in ("C", "Si"):
        shifted = [v - abs(charge) for v in vals]
    elif element == "B":
        shifted = [v - charge for v in vals]
    elif element == "H":
        shifted = [v - abs(charge) for v in vals]
    else:
        shifted = [v + charge for v in vals]
        if charge < 0 and len(vals) > 1:
            # hypervalent anions (PF6-, SF5-) expand like the next group
            shifted += [v - charge for v in vals]
    return tuple(sorted({v for v in shifted if v >= 0}))


def bond_length(e1, e2, order):
    """Reference bond length in Angstrom; falls back to scaled covalent radii."""
    tables = load_tables()
    key = "-".join(sorted((e1, e2)))
    entry = tables["bond_lengths"].get(key)
    if entry is not None and str(order) in entry:
        return entry[str(order)]
    r1 = tables["elements"][e1]["radius"]
    r2 = tables["elements"][e2]["radius"]
    return (r1 + r2) * tables["bond_order_scale"].get(str(order), 1.0)


def ideal_angle(hybridization):
    return load_tables()["angles"][hybridization]


def tokenizer_pattern():
    return load_tables()["tokenizer_pattern"]


def table_version():
    return load_tables()["version"]
