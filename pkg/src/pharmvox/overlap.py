"""Gaussian-overlap shape + colour Tanimoto ("TanimotoCombo") with rigid alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from .pharmacophore import PHARMACOPHORE_CHANNELS, SHAPE, PharmacophoreProfile, perceive

HIT_THRESHOLD = 1.2
P_AMPLITUDE = 2.0 * np.sqrt(2.0)
SIGMA_SCALE = 0.93
FLIPS = (np.diag([1.0, 1, 1]), np.diag([1.0, -1, -1]), np.diag([-1.0, 1, -1]), np.diag([-1.0, -1, 1]))


def alpha_for(radius=1.0):
    return 1.0 / (SIGMA_SCALE * radius) ** 2


def self_overlap_point(radius=1.0):
    """Overlap of one Gaussian with itself: p^2 (pi / 2 alpha)^(3/2)."""
    return P_AMPLITUDE ** 2 * (np.pi / (2 * alpha_for(radius))) ** 1.5


@dataclass(frozen=True)
class RigidTransform:
    """x -> R(q) x + t, with q a unit quaternion stored (w, x, y, z)."""

    quaternion: tuple = (1.0, 0.0, 0.0, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        q = np.asarray(self.quaternion, float)
        norm = np.linalg.norm(q)
        if norm == 0:
            raise ValueError("zero quaternion")
        object.__setattr__(self, "quaternion", tuple(float(v) for v in q / norm))
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))

    @classmethod
    def from_matrix(cls, rot, translation=(0.0, 0.0, 0.0)):
        x, y, z, w = Rotation.from_matrix(np.asarray(rot, float)).as_quat()
        return cls((w, x, y, z), tuple(translation))

    @property
    def matrix(self):
        w, x, y, z = self.quaternion
        return Rotation.from_quat([x, y, z, w]).as_matrix()

    def apply(self, points):
        pts = np.asarray(points, float).reshape(-1, 3)
        return pts @ self.matrix.T + np.asarray(self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other."""
        rot = self.matrix @ other.matrix
        t = self.matrix @ np.asarray(other.translation) + np.asarray(self.translation)
        return RigidTransform.from_matrix(rot, t)


IDENTITY = RigidTransform()


def gaussian_overlap(a, b, transform: RigidTransform = IDENTITY, radius=1.0):
    """First-order Gaussian overlap volume of two point clouds (b moved by ``transform``)."""
    a = np.asarray(a, float).reshape(-1, 3)
    b = transform.apply(b)
    if len(a) == 0 or len(b) == 0:
        return 0.0
    alpha = alpha_for(radius)
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return float(self_overlap_point(radius) * np.sum(np.exp(-0.5 * alpha * d2)))


@dataclass(frozen=True)
class OverlapScore:
    shape_tanimoto: float
    color_tanimoto: float
    combo: float
    transform: RigidTransform

    @property
    def is_hit(self):
        return is_hit(self.combo)


def is_hit(combo, threshold=HIT_THRESHOLD):
    return combo >= threshold


class _Scorer:
    """Precomputed terms for scoring a query profile against a candidate profile."""

    def __init__(self, qp: PharmacophoreProfile, cp: PharmacophoreProfile, radius=1.0):
        self.alpha = alpha_for(radius)
        self.k = self_overlap_point(radius)
        self.q_shape = qp.points[SHAPE]
        self.c_shape = cp.points[SHAPE]
        if len(self.q_shape) == 0 or len(self.c_shape) == 0:
            raise ValueError("alignment needs non-empty shape channels")
        self.q_col = [qp.points[c] for c in PHARMACOPHORE_CHANNELS]
        self.c_col = [cp.points[c] for c in PHARMACOPHORE_CHANNELS]
        self.qq_shape = self._self(self.q_shape)
        self.cc_shape = self._self(self.c_shape)
        self.qq_col = sum(self._self(p) for p in self.q_col)
        self.cc_col = sum(self._self(p) for p in self.c_col)
        # colour pairs flattened once so each evaluation is one vectorized pass
        self.c_col_all = np.concatenate(self.c_col, axis=0)
        pairs_q, pairs_c = [], []
        off_c = 0
        for qpts, cpts in zip(self.q_col, self.c_col):
            if len(qpts) and len(cpts):
                iq, ic = np.meshgrid(np.arange(len(qpts)), np.arange(len(cpts)), indexing="ij")
                pairs_q.append(qpts[iq.ravel()])
                pairs_c.append(ic.ravel() + off_c)
            off_c += len(cpts)
        self.col_q = np.concatenate(pairs_q) if pairs_q else np.zeros((0, 3))
        self.col_c_idx = np.concatenate(pairs_c) if pairs_c else np.zeros(0, dtype=int)

    def _self(self, pts):
        if len(pts) == 0:
            return 0.0
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        return float(self.k * np.sum(np.exp(-0.5 * self.alpha * d2)))

    def terms(self, rot, t):
        cs = self.c_shape @ rot.T + t
        d2 = np.sum((self.q_shape[:, None, :] - cs[None, :, :]) ** 2, axis=-1)
        o_shape = self.k * float(np.sum(np.exp(-0.5 * self.alpha * d2)))
        if len(self.col_c_idx):
            cc = self.c_col_all[self.col_c_idx] @ rot.T + t
            o_col = self.k * float(np.sum(np.exp(-0.5 * self.alpha * np.sum((self.col_q - cc) ** 2, axis=1))))
        else:
            o_col = 0.0
        return o_shape, o_col

    def tanimotos(self, rot, t):
        o_shape, o_col = self.terms(rot, t)
        shape = o_shape / (self.qq_shape + self.cc_shape - o_shape)
        denom = self.qq_col + self.cc_col - o_col
        color = o_col / denom if denom > 0 else 0.0
        return min(max(shape, 0.0), 1.0), min(max(color, 0.0), 1.0)


def _principal_frame(points):
    centred = points - points.mean(axis=0)
    cov = centred.T @ centred
    _, vecs = np.linalg.eigh(cov)
    vecs = vecs[:, ::-1]
    if np.linalg.det(vecs) < 0:
        vecs[:, 2] = -vecs[:, 2]
    return vecs


def _rotvec_matrix(w):
    return Rotation.from_rotvec(w).as_matrix()


def align(qp: PharmacophoreProfile, cp: PharmacophoreProfile, radius=1.0, maxiter=300, tol=1e-4):
    """Rigid transform of the candidate maximizing shape + colour Tanimoto.

    Both profiles are centred on their shape centroids; four principal-axes
    starts (proper flips) are each polished by Nelder-Mead over a rotation
    vector and translation. Returns (transform, shape, color).
    """
    qc = qp.shape_centroid()
    cc = cp.shape_centroid()
    qc_prof = qp.transformed(np.eye(3), -qc)
    cc_prof = cp.transformed(np.eye(3), -cc)
    scorer = _Scorer(qc_prof, cc_prof, radius)
    pq = _principal_frame(qc_prof.points[SHAPE])
    pc = _principal_frame(cc_prof.points[SHAPE])

    best = None
    for flip in FLIPS:
        r0 = pq @ flip @ pc.T

        def objective(x):
            rot = _rotvec_matrix(x[:3]) @ r0
            s, c = scorer.tanimotos(rot, x[3:])
            return -(s + c)

        simplex = np.zeros((7, 6))
        for k in range(6):
            simplex[k + 1, k] = 0.25 if k < 3 else 0.5
        res = minimize(objective, np.zeros(6), method="Nelder-Mead",
                       options={"maxiter": maxiter, "fatol": tol, "xatol": 1e-3, "initial_simplex": simplex})
        combo = -float(res.fun)
        if best is None or combo > best[0] + 1e-12:
            best = (combo, res.x, r0)
    _, x, r0 = best
    rot = _rotvec_matrix(x[:3]) @ r0
    shape, color = scorer.tanimotos(rot, x[3:])
    # undo the centring: x -> R (x - cc) + t + qc
    t = x[3:] + qc - rot @ cc
    return RigidTransform.from_matrix(rot, t), shape, color


def score_profiles(qp, cp, radius=1.0) -> OverlapScore:
    transform, shape, color = align(qp, cp, radius)
    return OverlapScore(shape, color, shape + color, transform)


def evaluate(qp, cp, transform: RigidTransform, radius=1.0):
    """Shape and colour Tanimoto of ``cp`` under a fixed transform (no optimization)."""
    scorer = _Scorer(qp, cp, radius)
    return scorer.tanimotos(transform.matrix, np.asarray(transform.translation))


def tanimoto_combo(q, c, radius=1.0) -> OverlapScore:
    """TanimotoCombo between two molecules with coordinates."""
    return score_profiles(perceive(q), perceive(c), radius)


@dataclass
class BestScore:
    index: int
    score: OverlapScore | None
    conformer: int | None
    n_conformers: int

    @property
    def combo(self):
        return None if self.score is None else self.score.combo


def best_tc(query, candidates, radius=1.0, counter=None):
    """Per candidate (a list of conformer molecules), the maximum combo over its conformers.

    Candidates without conformers get ``score=None``. ``counter`` (a list)
    receives one entry per executed conformer scoring.
    """
    qp = perceive(query) if not isinstance(query, PharmacophoreProfile) else query
    out = []
    for idx, confs in enumerate(candidates):
        confs = list(confs)
        best = None
        best_k = None
        for k, conf in enumerate(confs):
            cp = conf if isinstance(conf, PharmacophoreProfile) else perceive(conf)
            s = score_profiles(qp, cp, radius)
            if counter is not None:
                counter.append((idx, k))
            if best is None or s.combo > best.combo:
                best, best_k = s, k
        out.append(BestScore(idx, best, best_k, len(confs)))
    return out
