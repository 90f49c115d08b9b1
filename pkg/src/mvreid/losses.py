"""Similarity histograms, the histogram loss, triplet loss, and hard mining.

The histogram loss estimates the probability that a randomly drawn positive
pair is less similar than a randomly drawn negative pair: similarities are
soft-binned onto R nodes spanning [-1, 1] with a triangular kernel, and the
loss integrates the negative density against the positive CDF. Both the loss
and the pairwise-similarity extraction are differentiable through embeddings.
"""

import numpy as np

from .errors import ContractError
from .tensor import Tensor, active_tape

SIM_TOL = 1e-6
NORM_TOL = 1e-4


def _check_unit_rows(E, what):
    norms = np.linalg.norm(E, axis=-1)
    if np.abs(norms - 1.0).max() > NORM_TOL:
        raise ContractError("%s rows must be unit norm (worst |n-1| = %.2e)"
                            % (what, float(np.abs(norms - 1.0).max())))


def pair_similarities(embeddings, labels):
    """Dot products of all unordered pairs, split into positives (same label)
    and negatives (different label). Differentiable w.r.t. the embeddings.
    """
    labels = np.asarray(labels)
    B = embeddings.shape[0]
    if embeddings.ndim != 2 or B < 2:
        raise ContractError("need a 2-D batch of >= 2 embeddings, got shape %s"
                            % (embeddings.shape,))
    if labels.shape != (B,):
        raise ContractError("labels length %d does not match batch %d"
                            % (labels.size, B))
    E = embeddings.data
    _check_unit_rows(E, "embedding")

    iu, ju = np.triu_indices(B, k=1)
    same = labels[iu] == labels[ju]
    if not same.any():
        raise ContractError("batch has no positive pairs")
    if same.all():
        raise ContractError("batch has no negative pairs")
    sims = (E[iu] * E[ju]).sum(axis=1)

    def make_output(mask):
        ii, jj = iu[mask], ju[mask]
        out = Tensor(sims[mask], dtype=E.dtype,
                     requires_grad=embeddings.requires_grad and active_tape() is not None)
        if out.requires_grad:
            def fn(grad):
                # each pair sim s=<e_i,e_j> pushes grad*e_j into row i and vice
                # versa; accumulate through a symmetric pair-weight matrix
                W = np.zeros((B, B), dtype=E.dtype)
                np.add.at(W, (ii, jj), grad)
                np.add.at(W, (jj, ii), grad)
                embeddings.grad += W @ E
            active_tape().record(out, fn)
        return out

    return make_output(same), make_output(~same)


class SimilarityHistogram:
    """Soft-binned distribution of similarities over R uniform nodes."""

    def __init__(self, nodes, masses):
        self.nodes = nodes
        self.masses = masses

    @property
    def node_count(self):
        return len(self.nodes)

    def mean(self):
        return float((self.nodes * self.masses).sum())


def _as_sims(x):
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractError("similarities must form a non-empty vector, got shape %s"
                            % (arr.shape,))
    if arr.min() < -1.0 - SIM_TOL or arr.max() > 1.0 + SIM_TOL:
        raise ContractError("similarity outside [-1, 1]: range [%.6f, %.6f]"
                            % (float(arr.min()), float(arr.max())))
    return np.clip(arr, -1.0, 1.0)


def _soft_bin(s, R):
    """Triangular-kernel binning. Returns (masses, lower node index per sim)."""
    delta = 2.0 / (R - 1)
    t = (s + 1.0) / delta
    j = np.minimum(t.astype(np.intp), R - 2)  # lower node; top node folds down
    frac = t - j
    masses = np.zeros(R, dtype=s.dtype)
    np.add.at(masses, j, 1.0 - frac)
    np.add.at(masses, j + 1, frac)
    masses /= s.size
    return masses, j


def soft_histogram(sims, bins):
    """Distribute similarities onto ``bins`` nodes spanning [-1, 1]; each value
    splits linear-interpolation weight between its two enclosing nodes.
    """
    if bins < 2:
        raise ContractError("histogram needs >= 2 nodes, got %d" % bins)
    s = _as_sims(sims)
    masses, _ = _soft_bin(s, bins)
    return SimilarityHistogram(np.linspace(-1.0, 1.0, bins), masses)


def histogram_loss(pos_sims, neg_sims, bins=200):
    """Integral of the negative-similarity density against the positive CDF.

    0 = positives all strictly more similar than negatives, 1 = total
    reversal. Differentiable when the inputs came from pair_similarities.
    """
    if bins < 2:
        raise ContractError("histogram needs >= 2 nodes, got %d" % bins)
    sp = _as_sims(pos_sims)
    sn = _as_sims(neg_sims)
    dtype = sp.dtype if isinstance(pos_sims, Tensor) else np.float64
    sp = sp.astype(dtype, copy=False)
    sn = sn.astype(dtype, copy=False)
    delta = 2.0 / (bins - 1)
    h_pos, j_pos = _soft_bin(sp, bins)
    h_neg, j_neg = _soft_bin(sn, bins)
    phi_pos = np.cumsum(h_pos)                    # positive CDF per node
    loss = float((h_neg * phi_pos).sum())
    out_data = np.asarray(np.clip(loss, 0.0, 1.0), dtype=dtype)

    tape = active_tape()
    tracked = [t for t in (pos_sims, neg_sims)
               if isinstance(t, Tensor) and t.requires_grad]
    if tape is None or not tracked:
        return Tensor(out_data, dtype=dtype)

    psi_neg = np.cumsum(h_neg[::-1])[::-1]        # mass at or above each node
    out = Tensor(out_data, requires_grad=True, dtype=dtype)

    def fn(grad):
        g = grad.reshape(())
        if isinstance(pos_sims, Tensor) and pos_sims.requires_grad:
            # dL/ds+ = (psi[j+1] - psi[j]) / (|P| * delta)
            pos_sims.grad += g * (psi_neg[j_pos + 1] - psi_neg[j_pos]) / (sp.size * delta)
        if isinstance(neg_sims, Tensor) and neg_sims.requires_grad:
            neg_sims.grad += g * (phi_pos[j_neg + 1] - phi_pos[j_neg]) / (sn.size * delta)

    tape.record(out, fn)
    return out


def triplet_loss(anchor, positive, negative, margin=0.2):
    """mean over rows of max(0, |a-p|^2 - |a-n|^2 + margin); unit-norm inputs."""
    if margin < 0:
        raise ContractError("margin must be >= 0, got %g" % margin)
    shapes = {anchor.shape, positive.shape, negative.shape}
    if len(shapes) != 1:
        raise ContractError("triplet tensors must share a shape, got %s" % (shapes,))
    a, p, n = anchor.data, positive.data, negative.data
    flat = a.ndim == 1
    if flat:
        a, p, n = a[None], p[None], n[None]
    for arr, what in ((a, "anchor"), (p, "positive"), (n, "negative")):
        _check_unit_rows(arr, what)
    d_ap = ((a - p) ** 2).sum(axis=1)
    d_an = ((a - n) ** 2).sum(axis=1)
    per = np.maximum(d_ap - d_an + np.asarray(margin, a.dtype), 0)
    out_data = np.asarray(per.mean(), dtype=a.dtype)

    tape = active_tape()
    tracked = [t for t in (anchor, positive, negative) if t.requires_grad]
    if tape is None or not tracked:
        return Tensor(out_data, dtype=a.dtype)

    active = (per > 0).astype(a.dtype)[:, None] / per.size
    out = Tensor(out_data, requires_grad=True, dtype=a.dtype)

    def fn(grad):
        g = grad.reshape(()) * active
        ga = g * 2 * (n - p)
        gp = g * -2 * (a - p)
        gn = g * 2 * (a - n)
        if flat:
            ga, gp, gn = ga[0], gp[0], gn[0]
        if anchor.requires_grad:
            anchor.grad += ga
        if positive.requires_grad:
            positive.grad += gp
        if negative.requires_grad:
            negative.grad += gn

    tape.record(out, fn)
    return out


# ---------------------------------------------------------------------------
# hard mining

def identity_centroids(embeddings, labels):
    """Arithmetic mean embedding per identity (not re-normalized).

    Returns (sorted identity array, centroid matrix aligned with it).
    """
    E = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
    labels = np.asarray(labels)
    if E.ndim != 2 or E.shape[0] != labels.size or labels.size == 0:
        raise ContractError("centroids need matching non-empty embeddings/labels, "
                            "got %s vs %d labels" % (E.shape, labels.size))
    uniq, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    cents = np.zeros((uniq.size, E.shape[1]), dtype=E.dtype)
    np.add.at(cents, inverse, E)
    cents /= counts[:, None]
    return uniq, cents


def mine_hard_triplets(embeddings, labels, count, seed, q=5):
    """Sample ``count`` (anchor, positive, negative) index triples.

    For a uniformly chosen anchor identity (those with >= 2 samples), the hard
    positive is drawn from the q samples farthest from the identity centroid,
    the hard negative from the q other-identity samples nearest to it, and the
    anchor uniformly from the identity's remaining samples. Deterministic for
    a given seed.
    """
    E = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
    labels = np.asarray(labels)
    if count < 1:
        raise ContractError("triplet count must be >= 1, got %d" % count)
    if q < 1:
        raise ContractError("candidate depth q must be >= 1, got %d" % q)
    uniq, cents = identity_centroids(E, labels)
    if uniq.size < 2:
        raise ContractError("mining needs >= 2 identities, got %d" % uniq.size)
    inverse = np.searchsorted(uniq, labels)
    counts = np.bincount(inverse, minlength=uniq.size)
    eligible = np.where(counts >= 2)[0]
    if eligible.size == 0:
        raise ContractError("no identity has >= 2 samples; cannot form positives")

    rng = np.random.default_rng(seed)
    triplets = []
    for _ in range(count):
        gid = int(eligible[rng.integers(eligible.size)])
        same = np.where(inverse == gid)[0]
        other = np.where(inverse != gid)[0]
        c = cents[gid]
        d_same = np.linalg.norm(E[same] - c, axis=1)
        far = same[np.argsort(-d_same, kind="stable")[:min(q, same.size)]]
        pos = int(far[rng.integers(far.size)])
        d_other = np.linalg.norm(E[other] - c, axis=1)
        near = other[np.argsort(d_other, kind="stable")[:min(q, other.size)]]
        neg = int(near[rng.integers(near.size)])
        rest = same[same != pos]
        anchor = int(rest[rng.integers(rest.size)])
        triplets.append((anchor, pos, neg))
    return triplets


def build_training_batch(pool_embeddings, pool_labels, batch_triplets=64,
                         seed=0, q=5):
    """Mine triplets over a pooled embedding pass and collapse their members
    into one deduplicated batch.

    Returns (sorted member indices into the pool, triplets re-indexed into the
    member list). The caller re-embeds the members under its tape and applies
    the loss; duplicates across triplets share one batch slot.
    """
    triplets = mine_hard_triplets(pool_embeddings, pool_labels, batch_triplets,
                                  seed, q=q)
    members = sorted({i for t in triplets for i in t})
    remap = {orig: k for k, orig in enumerate(members)}
    local = [(remap[a], remap[p], remap[n]) for a, p, n in triplets]
    return members, local
