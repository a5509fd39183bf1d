from functools import lru_cache
from importlib.resources import files

import networkx as nx
import pytest

from pharmvox.chem import parse_smiles


def drug_records():
    text = files("pharmvox.chem.data").joinpath("drugs.smi").read_text()
    return [tuple(line.split("\t")) for line in text.splitlines() if line.strip()]


@lru_cache(maxsize=None)
def embedded_drugs():
    from pharmvox.chem.embed import embed_3d

    return tuple(embed_3d(parse_smiles(smi, name=name), seed=0) for smi, name in drug_records())


def as_graph(mol):
    g = nx.Graph()
    for i, a in enumerate(mol.atoms):
        g.add_node(i, label=(a.element, a.charge, a.hcount, a.aromatic))
    for b in mol.bonds:
        g.add_edge(b.a, b.b, order=b.order)
    return g


def isomorphic(m1, m2):
    return nx.is_isomorphic(as_graph(m1), as_graph(m2),
                            node_match=lambda x, y: x["label"] == y["label"],
                            edge_match=lambda x, y: x["order"] == y["order"])


@pytest.fixture(scope="session")
def drugs():
    return drug_records()


@pytest.fixture(scope="session")
def drugs3d():
    return embedded_drugs()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS, line

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(line(number))
