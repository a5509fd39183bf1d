"""Voxel-captioning model: 3D conv encoder, LSTM decoder conditioned on the latent at every step."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..chem.tokenizer import BOS, EOS, PAD, UNK, Vocabulary, detokenize
from ..pharmacophore import N_CHANNELS
from ..voxel import GridSpec, VoxelGrid
from . import autodiff as ad


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple = (16, 32, 64, 128)
    hidden: int = 256
    embed: int = 64
    grid: GridSpec = field(default_factory=GridSpec)
    channels: int = N_CHANNELS

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        size = self.grid.d
        for _ in self.widths:
            size = (size + 2 - 3) // 2 + 1
        if size < 1:
            raise ValueError("too many conv blocks for this grid size")

    @property
    def final_size(self):
        size = self.grid.d
        for _ in self.widths:
            size = (size + 2 - 3) // 2 + 1
        return size

    def to_dict(self):
        out = asdict(self)
        out["widths"] = list(self.widths)
        out["grid"] = self.grid.to_dict()
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grid"] = GridSpec(**d["grid"])
        d["widths"] = tuple(d["widths"])
        return cls(**d)


TINY = dict(widths=(4, 4), hidden=16, embed=8, grid=GridSpec(8, 1.0))


@dataclass(frozen=True)
class SamplerConfig:
    tau: float = 1.0
    top_k: int | None = None
    max_length: int = 100

    def __post_init__(self):
        if self.tau < 1.0:
            raise ValueError("tau must be >= 1")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1 or None")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")


class CaptionerModel:
    """Parameters live in ``self.params`` (name -> ndarray), in insertion order."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, params=None, seed=0, dtype=np.float32):
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        self.params = params if params is not None else self._init(np.random.default_rng(seed))
        self.params = {k: np.asarray(v, dtype=self.dtype) for k, v in self.params.items()}

    # ------------------------------------------------------------------ parameters

    def _init(self, rng):
        cfg = self.config
        p = {}
        cin = cfg.channels
        for l, cout in enumerate(cfg.widths):
            fan_in = cin * 27
            p[f"conv{l}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, 3, 3, 3))
            p[f"conv{l}.b"] = np.zeros(cout)
            cin = cout
        flat = cin * cfg.final_size ** 3
        h, e, r = cfg.hidden, cfg.embed, len(self.vocab)
        p["latent.w"] = rng.normal(0.0, np.sqrt(1.0 / flat), size=(flat, h))
        p["latent.b"] = np.zeros(h)
        p["embed"] = rng.normal(0.0, 1.0 / np.sqrt(e), size=(r, e))
        bound = 1.0 / np.sqrt(h)
        p["lstm.wx_token"] = rng.uniform(-bound, bound, size=(e, 4 * h))
        p["lstm.wx_latent"] = rng.uniform(-bound, bound, size=(h, 4 * h))
        p["lstm.u"] = rng.uniform(-bound, bound, size=(h, 4 * h))
        bias = np.zeros(4 * h)
        bias[h:2 * h] = 1.0  # forget-gate bias
        p["lstm.b"] = bias
        p["out.w"] = rng.normal(0.0, np.sqrt(1.0 / h), size=(h, r))
        p["out.b"] = np.zeros(r)
        return p

    def num_parameters(self):
        return int(sum(v.size for v in self.params.values()))

    def astype(self, dtype):
        return CaptionerModel(self.config, self.vocab, {k: v.copy() for k, v in self.params.items()}, dtype=dtype)

    def copy(self):
        return self.astype(self.dtype)

    # ------------------------------------------------------------------ graph

    def _check_grids(self, grids):
        grids = np.asarray(grids)
        d = self.config.grid.d
        if grids.ndim != 5 or grids.shape[1:] != (self.config.channels, d, d, d):
            raise ValueError(f"grids must be (B, {self.config.channels}, {d}, {d}, {d}), got {grids.shape}")
        return grids.astype(self.dtype, copy=False)

    def _encode_graph(self, grids, tensors):
        x = ad.constant(self._check_grids(grids))
        for l in range(len(self.config.widths)):
            x = ad.elu(ad.conv3d(x, tensors[f"conv{l}.w"], tensors[f"conv{l}.b"]))
        flat = ad.reshape(x, (x.shape[0], -1))
        return ad.affine(flat, tensors["latent.w"], tensors["latent.b"])

    def loss_graph(self, grids, ids, tensors=None):
        """Teacher-forced graph; returns (summed NLL tensor, logits tensor, targets, mask).

        The decoder input at step t is concat(embed(token_t), latent); the
        concatenation is realized as two input matrices whose products are summed.
        """
        if tensors is None:
            tensors = {k: ad.constant(v) for k, v in self.params.items()}
        ids = np.asarray(ids)
        bsz = ids.shape[0]
        hid = self.config.hidden
        z = self._encode_graph(grids, tensors)
        h0 = ad.tanh(z)
        c0 = ad.constant(np.zeros((bsz, hid), dtype=self.dtype))
        inputs, targets = ids[:, :-1], ids[:, 1:]
        mask = targets != PAD
        emb = ad.embedding(tensors["embed"], inputs)
        xg_tok = ad.affine(emb, tensors["lstm.wx_token"])
        xg_lat = ad.reshape(ad.affine(z, tensors["lstm.wx_latent"], tensors["lstm.b"]), (bsz, 1, 4 * hid))
        hs = ad.lstm_sequence(ad.add(xg_tok, xg_lat), h0, c0, tensors["lstm.u"])
        logits = ad.affine(hs, tensors["out.w"], tensors["out.b"])
        loss = ad.softmax_cross_entropy(logits, targets, mask)
        return loss, logits, targets, mask

    def loss_and_grads(self, grids, ids):
        tensors = {k: ad.parameter(v, k) for k, v in self.params.items()}
        loss, logits, targets, mask = self.loss_graph(grids, ids, tensors)
        loss.backward()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}
        return float(loss.data), grads, logits.data, targets, mask

    def sequence_loss(self, grids, ids):
        return float(self.loss_graph(grids, ids)[0].data)

    # ------------------------------------------------------------------ inference

    def encode(self, grids):
        """Latent vectors (B, hidden) for a batch of grids or a single ``VoxelGrid``."""
        if isinstance(grids, VoxelGrid):
            self._check_spec(grids)
            grids = grids.values[None]
        return self._encode_graph(grids, {k: ad.constant(v) for k, v in self.params.items()}).data

    def _check_spec(self, grid: VoxelGrid):
        g, s = grid.spec, self.config.grid
        if g.d != s.d or abs(g.resolution - s.resolution) > 1e-6:
            raise ValueError(f"grid spec {g} does not match the model's {s}")

    def initial_state(self, latent):
        latent = np.asarray(latent, dtype=self.dtype)
        h = np.tanh(latent)
        c = np.zeros_like(h)
        return h, c, self.latent_gates(latent)

    def latent_gates(self, latent):
        return np.asarray(latent, dtype=self.dtype) @ self.params["lstm.wx_latent"] + self.params["lstm.b"]

    def decode_step(self, state, tokens, latent):
        """One decoder step: returns (logits (n, R), new (h, c)).

        The latent enters the gates at every step alongside the token embedding.
        """
        return self._step(state, tokens, self.latent_gates(latent))

    def _step(self, state, tokens, latent_gates):
        tokens = np.asarray(tokens)
        if np.any(tokens < 0) or np.any(tokens >= len(self.vocab)):
            raise ValueError("token id outside the vocabulary")
        h, c = state
        xg = self.params["embed"][tokens] @ self.params["lstm.wx_token"] + latent_gates
        h, c, _ = ad.lstm_step(xg, h, c, self.params["lstm.u"])
        logits = h @ self.params["out.w"] + self.params["out.b"]
        return logits, (h, c)

    def sample(self, grid, n, cfg: SamplerConfig, rng):
        """``n`` ancestral samples (detokenized strings) conditioned on one grid."""
        return [detokenize(seq, self.vocab) for seq in self.sample_ids(grid, n, cfg, rng)]

    def sample_ids(self, grid, n, cfg: SamplerConfig, rng):
        latent = self.encode(grid)
        latent = np.repeat(latent, n, axis=0)
        h, c, lg = self.initial_state(latent)
        tokens = np.full(n, BOS)
        seqs = [[] for _ in range(n)]
        alive = np.ones(n, dtype=bool)
        for _ in range(cfg.max_length):
            logits, (h, c) = self._step((h, c), tokens, lg)
            probs = sampling_distribution(logits.astype(np.float64), cfg.tau, cfg.top_k)
            if cfg.top_k == 1:
                nxt = np.argmax(probs, axis=1)
            else:
                cum = np.cumsum(probs, axis=1)
                u = rng.random(n)[:, None] * cum[:, -1:]
                nxt = np.minimum((cum <= u).sum(axis=1), probs.shape[1] - 1)
                # never land on a zero-probability entry through round-off
                zero = probs[np.arange(n), nxt] == 0
                if np.any(zero):
                    nxt[zero] = np.argmax(probs[zero], axis=1)
            for i in np.where(alive)[0]:
                if nxt[i] == EOS:
                    alive[i] = False
                else:
                    seqs[i].append(int(nxt[i]))
            tokens = nxt
            if not alive.any():
                break
        return seqs


MASKED = (PAD, BOS, UNK)


def sampling_distribution(logits, tau=1.0, top_k=None):
    """exp(f/tau) / sum exp(f/tau) over allowed tokens, optionally restricted to the top-k logits.

    PAD, BOS and UNK get probability 0. Ties at the top-k boundary keep the lower ids.
    """
    if tau < 1.0:
        raise ValueError("tau must be >= 1")
    z = np.array(logits, dtype=np.float64, copy=True)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None]
    r = z.shape[1]
    for m in MASKED:
        if m < r:
            z[:, m] = -np.inf
    z = z / tau
    if top_k is not None and top_k < r:
        order = np.argsort(-z, axis=1, kind="stable")
        drop = order[:, top_k:]
        np.put_along_axis(z, drop, -np.inf, axis=1)
    m = np.max(z, axis=1, keepdims=True)
    e = np.exp(z - m)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if squeeze else p


def pad_batch(seqs, pad=PAD):
    """Right-pad token sequences into an (n, T) integer array."""
    longest = max(len(s) for s in seqs)
    out = np.full((len(seqs), longest), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def teacher_forced_accuracy(model, grids, ids):
    """Fraction of non-PAD target positions whose argmax prediction is correct."""
    _, logits, targets, mask = model.loss_graph(grids, ids)
    pred = np.argmax(logits.data, axis=-1)
    return float(np.sum((pred == targets) & mask)), float(np.sum(mask))
