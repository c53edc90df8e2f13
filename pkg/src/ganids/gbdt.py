"""Histogram gradient-boosted trees with one-side sampling and feature
bundling, used as the intrusion-detection classifier.

Multiclass is handled as softmax boosting: one tree per class per round on
the cross-entropy gradients, second-order leaf values -G/(H + lambda).
Bundling only accelerates histogram construction; split search always runs
per original feature, so bundling never changes the fitted trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeMismatch
from .data import Dataset, EmptyDataset


class SingleClass(ValueError):
    pass


class InvalidFraction(ValueError):
    pass


@dataclass
class BoostParams:
    rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 8
    max_bins: int = 255
    min_leaf: int = 20
    goss_a: float = 0.2
    goss_b: float = 0.1
    efb_max_conflict: float = 0.0
    use_efb: bool = True
    lam_leaf: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.goss_a < 0 or self.goss_b < 0 or self.goss_a + self.goss_b > 1:
            raise InvalidFraction("GOSS fractions must satisfy a, b >= 0, a+b <= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")

    def to_dict(self):
        return dict(vars(self))

    @staticmethod
    def from_dict(d):
        return BoostParams(**d)


# ---------------------------------------------------------------------------
# binning


class BinMapper:
    """Quantile bin boundaries per feature; raw value -> bin id in [0, bins).

    Values equal to a boundary fall in the lower bin. Features with few
    distinct values get one bin per distinct value.
    """

    def __init__(self, boundaries):
        self.boundaries = boundaries  # list of ascending float arrays

    @property
    def n_bins(self):
        return [len(b) + 1 for b in self.boundaries]

    @staticmethod
    def fit(matrix, max_bins):
        if matrix.shape[0] == 0:
            raise EmptyDataset("cannot fit bins on an empty matrix")
        bounds = []
        for j in range(matrix.shape[1]):
            col = matrix[:, j]
            distinct = np.unique(col)
            if len(distinct) <= max_bins:
                b = (distinct[:-1] + distinct[1:]) / 2.0
            else:
                qs = np.quantile(col, np.arange(1, max_bins) / max_bins)
                b = np.unique(qs)
            bounds.append(np.asarray(b, dtype=np.float64))
        return BinMapper(bounds)

    def transform(self, matrix):
        out = np.empty(matrix.shape, dtype=np.int32)
        for j, b in enumerate(self.boundaries):
            out[:, j] = np.searchsorted(b, matrix[:, j], side="left")
        return out

    def to_dict(self):
        return {"boundaries": [b.tolist() for b in self.boundaries]}

    @staticmethod
    def from_dict(d):
        return BinMapper([np.asarray(b, dtype=np.float64) for b in d["boundaries"]])


def bin_features(train: Dataset, max_bins):
    """Fit the bin mapper on a training set and bin its matrix."""
    if len(train) == 0:
        raise EmptyDataset("cannot bin an empty dataset")
    matrix = np.asarray(train.features, dtype=np.float64)
    mapper = BinMapper.fit(matrix, max_bins)
    return mapper, mapper.transform(matrix)


# ---------------------------------------------------------------------------
# GOSS


def goss_sample(gradients, a, b, seed):
    """Keep the top ceil(a*n) rows by |gradient|, sample ceil(b*n) of the
    rest uniformly with compensating weight (1-a)/b."""
    g = np.asarray(gradients, dtype=np.float64)
    n = len(g)
    if n == 0:
        raise InvalidFraction("empty gradient vector")
    if a < 0 or b < 0 or a + b > 1:
        raise InvalidFraction("require a, b >= 0 and a + b <= 1")
    order = np.argsort(-np.abs(g), kind="stable")
    top_n = int(np.ceil(a * n))
    rand_n = int(np.ceil(b * n))
    top = order[:top_n]
    rest = order[top_n:]
    rng = np.random.default_rng(seed)
    rand_n = min(rand_n, len(rest))
    sampled = rng.choice(rest, size=rand_n, replace=False) if rand_n else rest[:0]
    idx = np.concatenate([top, sampled])
    weights = np.ones(len(idx))
    if rand_n and b > 0:
        weights[top_n:] = (1.0 - a) / b
    srt = np.argsort(idx, kind="stable")
    return idx[srt], weights[srt]


# ---------------------------------------------------------------------------
# EFB


@dataclass
class BundleMap:
    """Groups of mutually (almost) exclusive features with disjoint offset
    ranges inside a shared histogram column."""

    bundles: list          # list of lists of feature ids
    offsets: list          # parallel: feature id -> offset within its bundle
    n_bins: list           # per original feature

    def bundle_sizes(self):
        sizes = []
        for bundle, offs in zip(self.bundles, self.offsets):
            sizes.append(1 + sum(self.n_bins[f] - 1 for f in bundle))
        return sizes

    def to_dict(self):
        return {"bundles": self.bundles, "offsets": self.offsets,
                "n_bins": self.n_bins}

    @staticmethod
    def from_dict(d):
        return BundleMap(d["bundles"], d["offsets"], d["n_bins"])


def efb_bundle(binned, n_bins, max_conflict=0.0) -> BundleMap:
    """Greedy exclusive-feature bundling on a binned matrix.

    Two features conflict on a row when both have a nonzero bin there; a
    feature joins a bundle only while the bundle's total conflict rate stays
    within max_conflict.
    """
    n, m = binned.shape
    if m == 0:
        return BundleMap([], [], list(n_bins))
    nonzero = binned != 0
    counts = nonzero.sum(axis=0)
    order = np.argsort(-counts, kind="stable")
    budget = int(max_conflict * n)
    bundle_masks, bundles, conflicts = [], [], []
    for f in order:
        placed = False
        for i, mask in enumerate(bundle_masks):
            c = int(np.sum(mask & nonzero[:, f]))
            if conflicts[i] + c <= budget:
                bundles[i].append(int(f))
                bundle_masks[i] = mask | nonzero[:, f]
                conflicts[i] += c
                placed = True
                break
        if not placed:
            bundles.append([int(f)])
            bundle_masks.append(nonzero[:, f].copy())
            conflicts.append(0)
    offsets = []
    for bundle in bundles:
        offs, off = [], 1
        for f in bundle:
            offs.append(off)
            off += n_bins[f] - 1
        offsets.append(offs)
    return BundleMap(bundles, offsets, list(n_bins))


def bundle_columns(binned, bundle_map: BundleMap):
    """Materialize one int column per bundle: 0 when every member is at bin
    0, else offset + bin - 1 of the (first) nonzero member."""
    n = binned.shape[0]
    cols = np.zeros((n, len(bundle_map.bundles)), dtype=np.int32)
    for i, (bundle, offs) in enumerate(zip(bundle_map.bundles, bundle_map.offsets)):
        col = cols[:, i]
        taken = np.zeros(n, dtype=bool)
        for f, off in zip(bundle, offs):
            v = binned[:, f]
            hit = (v != 0) & ~taken
            col[hit] = off + v[hit] - 1
            taken |= hit
    return cols


# ---------------------------------------------------------------------------
# trees


@dataclass
class TreeNode:
    feature: int = -1
    bin_threshold: int = -1   # go left when bin <= threshold
    gain: float = 0.0
    value: float = 0.0
    left: "TreeNode" = None
    right: "TreeNode" = None

    @property
    def is_leaf(self):
        return self.feature < 0

    def structure(self):
        if self.is_leaf:
            return ("leaf", round(self.value, 12))
        return ("split", self.feature, self.bin_threshold,
                self.left.structure(), self.right.structure())

    def to_dict(self):
        if self.is_leaf:
            return {"value": self.value}
        return {"feature": self.feature, "bin": self.bin_threshold,
                "gain": self.gain, "left": self.left.to_dict(),
                "right": self.right.to_dict()}

    @staticmethod
    def from_dict(d):
        if "feature" not in d:
            return TreeNode(value=d["value"])
        return TreeNode(feature=d["feature"], bin_threshold=d["bin"],
                        gain=d.get("gain", 0.0),
                        left=TreeNode.from_dict(d["left"]),
                        right=TreeNode.from_dict(d["right"]))


def _leaf_value(gsum, hsum, lam):
    return -gsum / (hsum + lam)


def split_gain(gl, hl, gr, hr, lam):
    """Second-order gain of a candidate split."""
    g, h = gl + gr, hl + hr
    return gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam)


class _HistContext:
    """Shared per-fit state: binned columns, bundle columns, weighted g/h."""

    def __init__(self, binned, bundle_map, bundle_cols, params):
        self.binned = binned
        self.bundle_map = bundle_map
        self.bundle_cols = bundle_cols
        self.sizes = bundle_map.bundle_sizes()
        self.params = params

    def best_split(self, rows, g, h):
        """Best (feature, bin, gain) over all features; histograms are built
        per bundle and sliced back into per-feature form."""
        p = self.params
        n_rows = len(rows)
        g_tot = float(g.sum())
        h_tot = float(h.sum())
        best = None  # (gain, feature, bin)
        for bi, (bundle, offs) in enumerate(zip(self.bundle_map.bundles,
                                                self.bundle_map.offsets)):
            col = self.bundle_cols[rows, bi]
            size = self.sizes[bi]
            cnt = np.bincount(col, minlength=size)
            gh = np.bincount(col, weights=g, minlength=size)
            hh = np.bincount(col, weights=h, minlength=size)
            for f, off in zip(bundle, offs):
                nb = self.bundle_map.n_bins[f]
                if nb < 2:
                    continue
                c = np.empty(nb)
                gs = np.empty(nb)
                hs = np.empty(nb)
                c[1:] = cnt[off:off + nb - 1]
                gs[1:] = gh[off:off + nb - 1]
                hs[1:] = hh[off:off + nb - 1]
                c[0] = n_rows - c[1:].sum()
                gs[0] = g_tot - gs[1:].sum()
                hs[0] = h_tot - hs[1:].sum()
                cl = np.cumsum(c)[:-1]
                gll = np.cumsum(gs)[:-1]
                hll = np.cumsum(hs)[:-1]
                ok = (cl >= p.min_leaf) & ((n_rows - cl) >= p.min_leaf)
                if not ok.any():
                    continue
                gains = np.where(
                    ok,
                    gll * gll / (hll + p.lam_leaf)
                    + (g_tot - gll) ** 2 / (h_tot - hll + p.lam_leaf)
                    - g_tot * g_tot / (h_tot + p.lam_leaf),
                    -np.inf)
                t = int(np.argmax(gains))
                gain = float(gains[t])
                if gain > 0 and (best is None or gain > best[0] + 1e-12
                                 or (abs(gain - best[0]) <= 1e-12
                                     and (f, t) < (best[1], best[2]))):
                    best = (gain, int(f), t)
        return best

    def build_tree(self, rows, g, h, depth=0):
        p = self.params
        node = TreeNode(value=_leaf_value(g.sum(), h.sum(), p.lam_leaf))
        if depth >= p.max_depth or len(rows) < 2 * p.min_leaf:
            return node
        best = self.best_split(rows, g, h)
        if best is None:
            return node
        gain, f, t = best
        mask = self.binned[rows, f] <= t
        node.feature, node.bin_threshold, node.gain = f, t, gain
        node.left = self.build_tree(rows[mask], g[mask], h[mask], depth + 1)
        node.right = self.build_tree(rows[~mask], g[~mask], h[~mask], depth + 1)
        return node


def predict_tree(node: TreeNode, binned):
    """Evaluate one tree on a binned matrix."""
    out = np.empty(binned.shape[0])
    stack = [(node, np.arange(binned.shape[0]))]
    while stack:
        nd, rows = stack.pop()
        if nd.is_leaf:
            out[rows] = nd.value
            continue
        mask = binned[rows, nd.feature] <= nd.bin_threshold
        stack.append((nd.left, rows[mask]))
        stack.append((nd.right, rows[~mask]))
    return out


# ---------------------------------------------------------------------------
# ensemble


@dataclass
class Ensemble:
    trees: list                 # trees[round][class]
    base_scores: np.ndarray     # (K,)
    mapper: BinMapper
    bundle_map: BundleMap
    n_classes: int
    learning_rate: float
    feature_names: list = field(default_factory=list)

    def raw_scores(self, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[1] != len(self.mapper.boundaries):
            raise ShapeMismatch(
                f"row width {matrix.shape[1]} does not match fitted layout "
                f"{len(self.mapper.boundaries)}")
        binned = self.mapper.transform(matrix)
        scores = np.tile(self.base_scores, (matrix.shape[0], 1))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                scores[:, k] += self.learning_rate * predict_tree(tree, binned)
        return scores

    def predict_proba(self, matrix):
        one = np.asarray(matrix, dtype=np.float64)
        squeeze = one.ndim == 1
        if squeeze:
            one = one[None, :]
        p = _softmax(self.raw_scores(one))
        return p[0] if squeeze else p

    def predict(self, matrix):
        return np.argmax(self.raw_scores(np.atleast_2d(
            np.asarray(matrix, dtype=np.float64))), axis=1)

    def feature_importance(self):
        """Total split gain per feature, aligned with feature_names."""
        imp = np.zeros(len(self.mapper.boundaries))
        stack = [t for rnd in self.trees for t in rnd]
        while stack:
            nd = stack.pop()
            if not nd.is_leaf:
                imp[nd.feature] += nd.gain
                stack.extend([nd.left, nd.right])
        return imp

    def to_dict(self):
        return {
            "trees": [[t.to_dict() for t in rnd] for rnd in self.trees],
            "base_scores": self.base_scores.tolist(),
            "mapper": self.mapper.to_dict(),
            "bundle_map": self.bundle_map.to_dict(),
            "n_classes": self.n_classes,
            "learning_rate": self.learning_rate,
            "feature_names": list(self.feature_names),
        }

    @staticmethod
    def from_dict(d):
        return Ensemble(
            trees=[[TreeNode.from_dict(t) for t in rnd] for rnd in d["trees"]],
            base_scores=np.asarray(d["base_scores"]),
            mapper=BinMapper.from_dict(d["mapper"]),
            bundle_map=BundleMap.from_dict(d["bundle_map"]),
            n_classes=d["n_classes"],
            learning_rate=d["learning_rate"],
            feature_names=list(d.get("feature_names", [])),
        )


def _softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit(train: Dataset, params: BoostParams) -> Ensemble:
    if len(train) == 0:
        raise EmptyDataset("cannot fit on an empty dataset")
    y = train.labels
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClass("training data contains a single class")
    k_total = len(train.schema.classes)
    n = len(train)

    mapper, binned = bin_features(train, params.max_bins)
    n_bins = mapper.n_bins
    if params.use_efb:
        bundle_map = efb_bundle(binned, n_bins, params.efb_max_conflict)
    else:
        bundle_map = BundleMap([[j] for j in range(binned.shape[1])],
                               [[1] for _ in range(binned.shape[1])],
                               list(n_bins))
    bcols = bundle_columns(binned, bundle_map)
    ctx = _HistContext(binned, bundle_map, bcols, params)

    priors = np.bincount(y, minlength=k_total).astype(np.float64)
    priors = np.maximum(priors, 1e-12) / n
    base = np.log(priors)
    scores = np.tile(base, (n, 1))
    onehot = np.eye(k_total)[y]

    trees = []
    for m in range(params.rounds):
        p = _softmax(scores)
        round_trees = []
        for k in range(k_total):
            g = p[:, k] - onehot[:, k]
            h = np.maximum(p[:, k] * (1.0 - p[:, k]), 1e-12)
            idx, w = goss_sample(g, params.goss_a, params.goss_b,
                                 seed=params.seed * 100003 + m * 31 + k)
            tree = ctx.build_tree(idx, g[idx] * w, h[idx] * w)
            scores[:, k] += params.learning_rate * predict_tree(tree, binned)
            round_trees.append(tree)
        trees.append(round_trees)
    return Ensemble(trees, base, mapper, bundle_map, k_total,
                    params.learning_rate, list(train.feature_names))
