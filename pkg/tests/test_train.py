import numpy as np
import pytest

from pharmvox.chem import parse_smiles
from pharmvox.chem.embed import embed_3d
from pharmvox.nn import TrainConfig, TrainingError, VCPT_MAGIC, fit, load_checkpoint, read_checkpoint, save_checkpoint
from pharmvox.nn.checkpoint import checkpoint_bytes
from pharmvox.nn.gradcheck import GRADCHECK_CORPUS, tiny_model
from pharmvox.nn.train import Adam, prepare
from pharmvox.pharmacophore import perceive


@pytest.fixture(scope="module")
def items():
    return [(smi, perceive(embed_3d(parse_smiles(smi)))) for smi in GRADCHECK_CORPUS]


def test_one_epoch_lowers_the_loss(items):
    model = tiny_model(seed=0, dtype=np.float32)
    hist = fit(model, items, config=TrainConfig(epochs=3, batch_size=2, lr=1e-2, augment=False))
    assert hist[0]["epoch"] == 0
    assert hist[-1]["train_loss"] < hist[0]["train_loss"]


def test_training_is_deterministic(items):
    runs = []
    for _ in range(2):
        model = tiny_model(seed=0, dtype=np.float32)
        hist = fit(model, items, config=TrainConfig(epochs=1, batch_size=2, seed=5))
        runs.append((hist[1]["train_loss"], model.params["lstm.u"].copy()))
    assert runs[0][0] == runs[1][0]
    assert np.array_equal(runs[0][1], runs[1][1])


def test_non_finite_loss_aborts(items):
    model = tiny_model(seed=0, dtype=np.float32)
    model.params["out.b"][:] = np.nan
    with pytest.raises(TrainingError):
        fit(model, items, config=TrainConfig(epochs=1, augment=False))


def test_unknown_tokens_rejected(items):
    model = tiny_model()
    with pytest.raises(ValueError):
        prepare(model, [("CBr", items[0][1])])


def test_stop_accuracy_ends_early(items):
    model = tiny_model(seed=0, dtype=np.float32)
    hist = fit(model, items, config=TrainConfig(epochs=50, stop_accuracy=-1.0, augment=False))
    assert len(hist) == 2


def test_adam_first_step_has_lr_magnitude():
    params = {"w": np.array([1.0, -2.0])}
    opt = Adam(params, lr=0.1)
    opt.step(params, {"w": np.array([3.0, -0.5])})
    np.testing.assert_allclose(params["w"], [0.9, -1.9], atol=1e-6)


def test_checkpoints_round_trip(tmp_path, items):
    model = tiny_model(seed=2, dtype=np.float32)
    hist = fit(model, items, config=TrainConfig(epochs=2, checkpoint_dir=str(tmp_path), augment=False))
    path = hist[-1]["checkpoint"]
    assert path.endswith("epoch0002.vcpt")
    back, header = load_checkpoint(path)
    assert header["epoch"] == 2
    assert back.vocab == model.vocab and back.config == model.config
    for k in model.params:
        assert np.array_equal(back.params[k], model.params[k])
    assert checkpoint_bytes(back, {"epoch": 2, "train_loss": header["train_loss"]}) == open(path, "rb").read()


def test_checkpoint_rejects_corruption(tmp_path):
    model = tiny_model(dtype=np.float32)
    save_checkpoint(model, tmp_path / "m.vcpt")
    data = (tmp_path / "m.vcpt").read_bytes()
    assert data[:4] == VCPT_MAGIC
    with pytest.raises(ValueError):
        read_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        read_checkpoint(data[:4] + b"\x09\x00" + data[6:])
