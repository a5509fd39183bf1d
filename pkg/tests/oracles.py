"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np


def brute_voxelize(points_per_channel, d, resolution, center, radius=1.0):
    """Untruncated per-voxel evaluation of 1 - prod(1 - exp(-dist^2 / (0.93 r)^2))."""
    sigma2 = (0.93 * radius) ** 2
    out = np.zeros((len(points_per_channel), d, d, d))
    offsets = (np.arange(d) - (d - 1) / 2.0) * resolution
    for c, pts in enumerate(points_per_channel):
        pts = np.asarray(pts, float).reshape(-1, 3)
        for i, j, k in itertools.product(range(d), repeat=3):
            v = np.array([center[0] + offsets[i], center[1] + offsets[j], center[2] + offsets[k]])
            comp = 1.0
            for p in pts:
                comp *= 1.0 - np.exp(-np.sum((v - p) ** 2) / sigma2)
            out[c, i, j, k] = 1.0 - comp
    return out


def brute_voxelize_fast(points_per_channel, d, resolution, center, radius=1.0):
    """Same formula as ``brute_voxelize`` with dense broadcasting (no distance cutoff)."""
    sigma2 = (0.93 * radius) ** 2
    offsets = (np.arange(d) - (d - 1) / 2.0) * resolution
    gx, gy, gz = np.meshgrid(center[0] + offsets, center[1] + offsets, center[2] + offsets, indexing="ij")
    voxels = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    out = np.zeros((len(points_per_channel), d ** 3))
    for c, pts in enumerate(points_per_channel):
        pts = np.asarray(pts, float).reshape(-1, 3)
        if len(pts) == 0:
            continue
        d2 = ((voxels[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        out[c] = 1.0 - np.prod(1.0 - np.exp(-d2 / sigma2), axis=1)
    return out.reshape(-1, d, d, d)


def gaussian_overlap_quadrature(a, b, radius=1.0, spacing=0.1, pad=4.0):
    """Riemann sum of rho_A * rho_B with rho = sum_i p exp(-alpha |x - x_i|^2)."""
    alpha = 1.0 / (0.93 * radius) ** 2
    p = 2.0 * np.sqrt(2.0)
    pts = np.vstack([a, b])
    lo, hi = pts.min(axis=0) - pad, pts.max(axis=0) + pad
    axes = [np.arange(lo[k], hi[k] + spacing, spacing) for k in range(3)]
    total = 0.0
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
    for z in axes[2]:
        grid = np.stack([gx, gy, np.full_like(gx, z)], axis=-1)
        ra = sum(p * np.exp(-alpha * ((grid - x) ** 2).sum(-1)) for x in a)
        rb = sum(p * np.exp(-alpha * ((grid - x) ** 2).sum(-1)) for x in b)
        total += np.sum(ra * rb)
    return total * spacing ** 3


def neighborhood_environments(mol, radius):
    """Distinct atom-centred neighbourhoods as canonical nested tuples (no hashing)."""
    def inv(i):
        a = mol.atoms[i]
        return (a.element, a.charge, mol.degree(i), a.hcount, mol.is_ring_atom(i), a.aromatic)

    layers = [[inv(i) for i in range(len(mol.atoms))]]
    for _ in range(radius):
        prev = layers[-1]
        layers.append([
            (prev[i], tuple(sorted((mol.bonds[k].order, prev[j]) for j, k in mol.neighbors[i])))
            for i in range(len(mol.atoms))
        ])
    return {(r, env) for r, layer in enumerate(layers) for env in layer}


def grid_search_combo(q_shape, c_shape, q_color, c_color, radius=1.0, step_deg=5.0,
                      t_step=0.1, t_max=1.2, coarse=3, margin=0.3, chunk=512):
    """Best shape + colour Tanimoto over a zyz Euler grid times a translation grid.

    Colour points are lists of (channel, xyz). Both profiles are first centred
    on their shape centroids; translations span [-t_max, t_max] on each axis.
    Every rotation is scored on every ``coarse``-th translation; rotations within
    ``margin`` of the best coarse value are then scored on the full grid.
    """
    from scipy.spatial.transform import Rotation

    alpha = 1.0 / (0.93 * radius) ** 2
    k = 8.0 * (np.pi / (2 * alpha)) ** 1.5
    qs = np.asarray(q_shape, float)
    cs = np.asarray(c_shape, float)
    qc, cc = qs.mean(0), cs.mean(0)
    qs, cs = qs - qc, cs - cc
    qcol = [(ch, np.asarray(p, float) - qc) for ch, p in q_color]
    ccol = [(ch, np.asarray(p, float) - cc) for ch, p in c_color]

    def self_ov(pts):
        pts = np.asarray(pts).reshape(-1, 3)
        if len(pts) == 0:
            return 0.0
        d2 = ((pts[:, None] - pts[None]) ** 2).sum(-1)
        return k * np.exp(-0.5 * alpha * d2).sum()

    qq_s, cc_s = self_ov(qs), self_ov(cs)
    chans = {ch for ch, _ in qcol} | {ch for ch, _ in ccol}
    qq_c = sum(self_ov([p for ch2, p in qcol if ch2 == ch]) for ch in chans)
    cc_c = sum(self_ov([p for ch2, p in ccol if ch2 == ch]) for ch in chans)
    shape_pairs = [(i, j) for i in range(len(qs)) for j in range(len(cs))]
    col_pairs = [(a, b) for a, (ca, _) in enumerate(qcol) for b, (cb, _) in enumerate(ccol) if ca == cb]
    qcol_pts = np.array([p for _, p in qcol]).reshape(-1, 3)
    ccol_pts = np.array([p for _, p in ccol]).reshape(-1, 3)

    ang = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    beta = np.deg2rad(np.arange(0.0, 180.0 + 1e-9, step_deg))
    e = np.stack(np.meshgrid(ang, beta, ang, indexing="ij"), -1).reshape(-1, 3)
    rots = Rotation.from_euler("zyz", e).as_matrix()
    fine = np.arange(-t_max, t_max + 1e-9, t_step)

    def overlaps(diffs, ts):
        # K * sum_p prod_axis gauss on a separable translation grid -> (r, n^3)
        n = len(ts)
        g = np.exp(-0.5 * alpha * (diffs[..., None] - ts) ** 2)
        gx, gy, gz = g[:, :, 0], g[:, :, 1], g[:, :, 2]
        a = (gx[:, :, :, None] * gy[:, :, None, :]).reshape(len(diffs), diffs.shape[1], n * n)
        return k * np.matmul(a.transpose(0, 2, 1), gz).reshape(len(diffs), -1)

    def combos(r, ts):
        rc = np.einsum("rab,jb->rja", r, cs)
        diffs = np.stack([qs[i] - rc[:, j] for i, j in shape_pairs], axis=1)
        o_s = overlaps(diffs, ts)
        out = o_s / (qq_s + cc_s - o_s)
        if col_pairs:
            rcc = np.einsum("rab,jb->rja", r, ccol_pts)
            cd = np.stack([qcol_pts[a] - rcc[:, b] for a, b in col_pairs], axis=1)
            o_c = overlaps(cd, ts)
            out = out + o_c / (qq_c + cc_c - o_c)
        return out.max(axis=1)

    rough = np.concatenate([combos(rots[s:s + chunk], fine[::coarse]) for s in range(0, len(rots), chunk)])
    keep = rots[rough >= rough.max() - margin]
    return float(max(combos(keep[s:s + 64], fine).max() for s in range(0, len(keep), 64)))


def exhaustive_top_k(query_bits, library_bits, ids, smiles, query_smiles, k):
    """Top-k by boolean-matrix Tanimoto, ties by ascending id, same structure excluded.

    ``query_bits`` (n_q, nbits) and ``library_bits`` (n_l, nbits) are 0/1 arrays.
    """
    q = np.asarray(query_bits, np.float32)
    lib = np.asarray(library_bits, np.float32)
    inter = q @ lib.T
    union = q.sum(1)[:, None] + lib.sum(1)[None, :] - inter
    sims = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    out = []
    for row, qs in zip(sims, query_smiles):
        ranked = sorted(range(len(ids)), key=lambda j: (-row[j], ids[j]))
        out.append([(ids[j], float(row[j])) for j in ranked if smiles[j] != qs][:k])
    return out


def bits_matrix(fingerprints):
    return np.stack([np.unpackbits(fp.words.astype("<u8").view(np.uint8), bitorder="little") for fp in fingerprints])


def naive_conv3d(x, w, b, stride=2, pad=1):
    """Direct loop convolution over output positions."""
    bsz, c, d = x.shape[0], x.shape[1], x.shape[2]
    o, k = w.shape[0], w.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    n = (d + 2 * pad - k) // stride + 1
    out = np.zeros((bsz, o, n, n, n))
    for i in range(n):
        for j in range(n):
            for l in range(n):
                patch = xp[:, :, i * stride:i * stride + k, j * stride:j * stride + k, l * stride:l * stride + k]
                out[:, :, i, j, l] = np.einsum("bcxyz,ocxyz->bo", patch, w) + b
    return out


def naive_lstm(xg, h, c, u):
    """Per-step LSTM with gate order (input, forget, cell, output)."""
    hid = h.shape[1]
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    hs = []
    for t in range(xg.shape[1]):
        gates = xg[:, t] + h @ u
        i, f = sig(gates[:, :hid]), sig(gates[:, hid:2 * hid])
        g, o = np.tanh(gates[:, 2 * hid:3 * hid]), sig(gates[:, 3 * hid:])
        c = f * c + i * g
        h = o * np.tanh(c)
        hs.append(h)
    return np.stack(hs, axis=1)


def naive_masked_nll(logits, targets, mask):
    total = 0.0
    for idx in np.ndindex(*targets.shape):
        if mask[idx]:
            row = logits[idx]
            total += np.log(np.sum(np.exp(row))) - row[targets[idx]]
    return total
