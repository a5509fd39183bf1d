import io

import numpy as np
import pytest

from pharmvox.chem import parse_smiles, write_canonical_smiles
from pharmvox.chem.embed import embed_3d
from pharmvox.chem.sdf import SdfError, iter_sdf, molblock, read_sdf, write_sdf

WATER = """water
  handmade

  3  2  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.1173 O   0  0  0  0  0  0  0  0  0  0  0  0
    0.0000    0.7572   -0.4692 H   0  0  0  0  0  0  0  0  0  0  0  0
    0.0000   -0.7572   -0.4692 H   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0
  1  3  1  0
M  END
$$$$
"""


def test_water_coordinates_are_read_exactly():
    mols = read_sdf(io.StringIO(WATER.replace("O   0", "O   0")))
    assert len(mols) == 1
    # explicit hydrogens fold into the oxygen's H count
    m = mols[0]
    assert m.name == "water"
    assert [a.element for a in m.atoms] == ["O"]
    assert m.atoms[0].hcount == 2
    np.testing.assert_array_equal(m.coords[0], [0.0, 0.0, 0.1173])


def test_heavy_atom_coordinates_verbatim():
    text = """
  x

  3  2  0  0  0  0  0  0  0  0999 V2000
    1.2340   -0.5000    2.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    2.7740   -0.5000    2.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    3.2000    0.8000    2.1000 O   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0
  2  3  1  0
M  END
$$$$
"""
    m = read_sdf(io.StringIO(text))[0]
    np.testing.assert_array_equal(m.coords, [[1.234, -0.5, 2.0], [2.774, -0.5, 2.0], [3.2, 0.8, 2.1]])
    assert write_canonical_smiles(m) == "CCO"


def test_two_records():
    assert len(read_sdf(io.StringIO(WATER + WATER))) == 2


def test_counts_mismatch_is_an_error():
    broken = WATER.replace("  3  2  0", "  5  2  0")
    with pytest.raises(SdfError):
        read_sdf(io.StringIO(broken))


def test_malformed_counts_line():
    with pytest.raises(SdfError):
        read_sdf(io.StringIO(WATER.replace("  3  2  0  0", " xx  2  0  0")))


def test_unsupported_element_in_sdf():
    with pytest.raises(Exception) as exc:
        read_sdf(io.StringIO(WATER.replace(" O   0", " Xe  0")))
    assert "Xe" in str(exc.value) or "element" in str(exc.value).lower()


def test_charge_block_overrides_atom_block(tmp_path):
    m = embed_3d(parse_smiles("CC(=O)[O-]", name="acetate"))
    path = tmp_path / "a.sdf"
    write_sdf([m], path)
    text = path.read_text()
    assert "M  CHG  1" in text
    back = read_sdf(path)[0]
    assert write_canonical_smiles(back) == write_canonical_smiles(m)
    np.testing.assert_allclose(back.coords, m.coords, atol=1e-4)


def test_round_trip_drugs(tmp_path, drugs3d):
    path = tmp_path / "drugs.sdf"
    write_sdf(drugs3d, path)
    back = list(iter_sdf(path))
    assert len(back) == len(drugs3d)
    for a, b in zip(drugs3d, back):
        assert a.name == b.name
        assert write_canonical_smiles(a) == write_canonical_smiles(b)
        np.testing.assert_allclose(a.coords, b.coords, atol=1e-4)


def test_molblock_from_bytes_stream():
    m = embed_3d(parse_smiles("c1ccncc1", name="pyridine"))
    data = (molblock(m) + "$$$$\n").encode()
    back = read_sdf(io.BytesIO(data))[0]
    assert write_canonical_smiles(back) == "c1ccncc1"
