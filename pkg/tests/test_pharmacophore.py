import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from pharmvox.chem import ChemError, parse_smiles
from pharmvox.chem.embed import embed_3d
from pharmvox.pharmacophore import CHANNELS, N_CHANNELS, PharmacophoreProfile, feature_groups, perceive


def profile(smi):
    return perceive(embed_3d(parse_smiles(smi)))


def test_channel_order_is_fixed():
    assert CHANNELS == ("donor", "acceptor", "cation", "anion", "aromatic", "hydrophobe", "shape")
    assert N_CHANNELS == 7


def test_ethanol():
    m = embed_3d(parse_smiles("CCO"))
    p = perceive(m)
    np.testing.assert_array_equal(p["donor"], m.coords[[2]])
    np.testing.assert_array_equal(p["acceptor"], m.coords[[2]])
    assert p.counts[-1] == 3
    assert len(p["cation"]) == len(p["anion"]) == 0


def test_benzene_single_centroid():
    m = embed_3d(parse_smiles("c1ccccc1"))
    p = perceive(m)
    assert p.counts == (0, 0, 0, 0, 1, 0, 6)
    np.testing.assert_allclose(p["aromatic"][0], m.coords.mean(axis=0), atol=1e-12)


def test_acetate_anion_group():
    g = feature_groups(parse_smiles("CC(=O)[O-]"))
    assert sorted(g["anion"]) == [(2,), (3,)]
    assert sorted(g["acceptor"]) == [(2,), (3,)]
    assert g["cation"] == []


@pytest.mark.parametrize("smi,channel,count", [
    ("CC(=O)O", "anion", 2),            # neutral acid: deprotonatable heuristic
    ("CCN(C)C", "cation", 1),           # tertiary aliphatic amine
    ("CC(=O)NC", "cation", 0),          # amide N is not basic
    ("CC(=O)NC", "acceptor", 1),        # only the carbonyl O accepts
    ("c1ccc(cc1)N", "cation", 0),       # aniline is not basic
    ("NC(=N)N", "cation", 1),           # guanidine carbon
    ("C[N+](C)(C)C", "cation", 1),
    ("C[N+](=O)[O-]", "cation", 0),     # nitro is charge-separated, not ionic
    ("C[N+](=O)[O-]", "anion", 0),
    ("c1nn[nH]n1", "anion", 4),         # tetrazole nitrogens
    ("c1cc[nH]c1", "acceptor", 0),      # pyrrole-type N
    ("c1ccncc1", "acceptor", 1),
    ("CS(=O)(=O)[O-]", "anion", 1),
    ("CCCC(C)O", "hydrophobe", 2),      # C1-C3 run and the lone methyl
])
def test_rule_table(smi, channel, count):
    assert len(feature_groups(parse_smiles(smi))[channel]) == count


def test_shape_counts_heavy_atoms(drugs3d):
    for m in drugs3d:
        assert perceive(m).counts[-1] == len(m.atoms)


def test_missing_coordinates():
    with pytest.raises(ChemError):
        perceive(parse_smiles("CCO"))


def test_json_round_trip():
    p = profile("CC(=O)Nc1ccc(O)cc1")
    q = PharmacophoreProfile.from_json(p.to_json())
    for a, b in zip(p.points, q.points):
        np.testing.assert_array_equal(a, b)


def test_determinism():
    a, b = profile("CN1CCC[C@H]1c1cccnc1"), profile("CN1CCC[C@H]1c1cccnc1")
    assert all(np.array_equal(x, y) for x, y in zip(a.points, b.points))


_MOL = embed_3d(parse_smiles("CC(C)Cc1ccc(cc1)C(C)C(=O)O"))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_equivariance(seed):
    rng = np.random.default_rng(seed)
    rot = Rotation.random(random_state=seed).as_matrix()
    t = rng.uniform(-5, 5, 3)
    moved = _MOL.with_coords(_MOL.coords @ rot.T + t)
    a = perceive(_MOL).transformed(rot, t)
    b = perceive(moved)
    for x, y in zip(a.points, b.points):
        np.testing.assert_allclose(x, y, atol=1e-9)
