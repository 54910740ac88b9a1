"""Cardinality cuts learned by spectral clustering of column similarity.

The self-trained pipeline (solve_stcb) is:

1. pretrain a reference selection cheaply via row generation;
2. build the normalized Gram matrix of the constraint columns (cosine
   similarity of column incidence vectors);
3. cluster the columns spectrally, treating the normalized Gram matrix as a
   weighted graph: symmetric normalized Laplacian, k smallest eigenvectors,
   row-normalized embedding, seeded k-means;
4. order clusters by how active they are in the reference selection and cut
   the extremes: require at least xi_plus choices inside the most active
   cluster and allow at most xi_minus inside the least active one;
5. solve the full problem with the two cuts injected.

Two cut modes exist.  "literal" sets xi_minus = |S-| - activation(S-), which
can exclude the reference point itself whenever more than half of S- is
active; "warmstart" (default) anchors both thresholds at the reference
activity plus/minus a slack so the pre-trained point always satisfies both
cuts.  A fallback guard re-solves without cuts when the augmented solve is
infeasible or trails the plain greedy objective at a checkpoint fraction of
the time limit.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bnb import (GE, LE, STATUS_INFEASIBLE, LinearCut, SolveConfig, SolveResult,
                  solve)
from .errors import DegenerateGramError, EigenSolverError
from .rowgen import PretrainResult, RowGenConfig, pretrain
from .scp import ScpInstance, Selection, greedy_cover

DENSE_EIGEN_LIMIT = 3000
FALLBACK_CHECKPOINT = 0.25  # fraction of the time limit


@dataclass(frozen=True)
class NormalizedGram:
    """Cosine similarities between retained constraint columns.

    matrix is a scipy.sparse CSR over the retained columns only; retained
    maps matrix positions back to instance column indices, and pruned lists
    the zero-norm columns dropped before normalization.
    """

    matrix: object
    retained: tuple[int, ...]
    pruned: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return len(self.retained)


@dataclass(frozen=True)
class VariablePartition:
    """Disjoint clusters of instance column indices, most active first."""

    clusters: tuple[frozenset[int], ...]
    activation: tuple[int, ...]

    def __post_init__(self):
        if len(self.clusters) < 2:
            raise ValueError("a partition needs at least 2 clusters")
        seen: set[int] = set()
        for cluster in self.clusters:
            if cluster & seen:
                raise ValueError("partition clusters must be disjoint")
            seen |= cluster


@dataclass(frozen=True)
class CardinalityCuts:
    upper: LinearCut  # at least rhs chosen inside the most active cluster
    lower: LinearCut  # at most rhs chosen inside the least active cluster
    mode: str
    slack: int

    def __post_init__(self):
        if self.upper.sense != GE or self.lower.sense != LE:
            raise ValueError("upper cut must be >= and lower cut <=")
        if self.upper.support & self.lower.support:
            raise ValueError("cut supports must be disjoint")
        if self.mode not in ("literal", "warmstart"):
            raise ValueError(f"unknown cut mode {self.mode!r}")
        if self.slack < 0:
            raise ValueError("slack must be >= 0")

    def as_list(self) -> list[LinearCut]:
        return [self.upper, self.lower]


def normalized_gram(instance: ScpInstance) -> NormalizedGram:
    """Build D^{-1/2} (A^T A) D^{-1/2} over the nonzero-norm columns.

    Entry (i, j) is the cosine similarity of columns i and j: the retained
    block has unit diagonal and all entries in [0, 1].  Columns with zero
    norm (covering no row) are pruned and recorded; assembly normally prunes
    them already, so this guards hand-built or row-subset instances.
    """
    import scipy.sparse as sp

    a = instance.sparse()
    gram = (a.T @ a).tocsr()
    diag = gram.diagonal()
    keep = diag > 0
    if not keep.any():
        raise DegenerateGramError("every column has zero norm; nothing to cluster")
    retained = np.flatnonzero(keep)
    pruned = np.flatnonzero(~keep)
    sub = gram[retained][:, retained].tocsr()
    scale = sp.diags(1.0 / np.sqrt(diag[retained]))
    normalized = (scale @ sub @ scale).tocsr()
    return NormalizedGram(normalized, tuple(int(i) for i in retained),
                          tuple(int(i) for i in pruned))


def normalized_laplacian(gram: NormalizedGram):
    """Symmetric normalized graph Laplacian of the similarity graph.

    Degrees include the unit self-similarity, so they are always >= 1 and
    the spectrum lies in [0, 2].
    """
    import scipy.sparse as sp

    weights = gram.matrix
    degree = np.asarray(weights.sum(axis=1)).ravel()
    scale = sp.diags(1.0 / np.sqrt(degree))
    return (sp.identity(gram.size, format="csr") - scale @ weights @ scale).tocsr()


def _kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 100) -> np.ndarray:
    """Seeded k-means with k-means++ initialization.

    Assignment ties go to the lowest centroid index; an emptied cluster is
    reseeded to the point farthest from its current centroid.  Deterministic
    for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    npts = len(points)
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.integers(npts))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(npts))
        else:
            idx = int(rng.choice(npts, p=d2 / total))
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    labels = np.full(npts, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dists, axis=1)
        own = dists[np.arange(npts), new_labels]
        for c in range(k):
            members = new_labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(own))
                centers[c] = points[far]
                new_labels[far] = c
                own[far] = 0.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def spectral_partition(gram: NormalizedGram, k: int, seed: int) -> tuple[frozenset[int], ...]:
    """Cluster the retained columns into k groups via the similarity graph.

    Clusters are returned in order of their smallest member so the output is
    canonical; identical (instance, k, seed) always yields identical
    clusters.  Raises EigenSolverError when the iterative eigensolver does
    not converge.
    """
    import scipy.sparse as sp

    if k < 2:
        raise ValueError("k must be >= 2")
    if k > gram.size:
        raise ValueError(f"k = {k} exceeds the {gram.size} retained columns")
    lap = normalized_laplacian(gram)
    if gram.size <= DENSE_EIGEN_LIMIT:
        from scipy.linalg import eigh

        dense = lap.toarray()
        dense = (dense + dense.T) / 2.0
        _, vecs = eigh(dense, subset_by_index=[0, k - 1])
    else:
        from scipy.sparse.linalg import ArpackNoConvergence, eigsh

        # smallest eigenvectors of the PSD Laplacian == largest of 2I - L,
        # which Lanczos handles far better than a small-magnitude target
        shifted = sp.identity(gram.size, format="csr") * 2.0 - lap
        try:
            vals, vecs = eigsh(shifted, k=k, which="LA")
        except ArpackNoConvergence as exc:
            converged = len(getattr(exc, "eigenvalues", ()))
            raise EigenSolverError(
                f"eigensolver converged only {converged}/{k} eigenpairs",
                iterations=converged) from exc
        vecs = vecs[:, np.argsort(-vals)]
    norms = np.linalg.norm(vecs, axis=1)
    norms[norms < 1e-12] = 1.0
    embedding = vecs / norms[:, None]
    labels = _kmeans(embedding, k, seed)
    groups: dict[int, list[int]] = {}
    for pos, label in enumerate(labels):
        groups.setdefault(int(label), []).append(gram.retained[pos])
    clusters = sorted((frozenset(members) for members in groups.values()),
                      key=lambda cluster: min(cluster))
    return tuple(clusters)


def derive_cuts(clusters, anchor: Selection, mode: str = "warmstart",
                slack: int | None = None) -> tuple[VariablePartition, CardinalityCuts]:
    """Turn a column clustering plus a reference selection into the cut pair.

    Clusters are sorted by activation (how many reference choices they
    contain) descending, ties by smallest member index; the top cluster is
    cut from below (>=) and the bottom cluster from above (<=).  Middle
    clusters of a k > 2 partition are left uncut.
    """
    cluster_sets = [frozenset(int(j) for j in cluster) for cluster in clusters]
    chosen = anchor.chosen
    activation = [len(cluster & chosen) for cluster in cluster_sets]
    order = sorted(range(len(cluster_sets)),
                   key=lambda i: (-activation[i], min(cluster_sets[i])))
    partition = VariablePartition(tuple(cluster_sets[i] for i in order),
                                  tuple(activation[i] for i in order))
    high, low = partition.clusters[0], partition.clusters[-1]
    act_high, act_low = partition.activation[0], partition.activation[-1]
    if slack is None:
        slack = max(1, round(0.05 * len(high)))
    if mode == "literal":
        rhs_high = act_high
        rhs_low = len(low) - act_low
    elif mode == "warmstart":
        rhs_high = max(0, act_high - slack)
        rhs_low = min(len(low), act_low + slack)
    else:
        raise ValueError(f"unknown cut mode {mode!r}")
    cuts = CardinalityCuts(LinearCut(high, GE, rhs_high),
                           LinearCut(low, LE, rhs_low), mode, int(slack))
    return partition, cuts


@dataclass
class StcbResult:
    """Outcome of the full pipeline: the final solve plus every learned stage."""

    solve: SolveResult
    pretrain: PretrainResult
    partition: VariablePartition
    cuts: CardinalityCuts
    fallback: bool = False
    fallback_reason: str | None = None
    stage_seconds: dict = field(default_factory=dict)
    augmented_attempt: SolveResult | None = None

    def pipeline_log(self):
        """Incumbent log with elapsed times measured from pipeline start,
        so time-to-objective comparisons charge the pre-training overhead
        to this method."""
        return self.solve.log.shifted(self.stage_seconds.get("setup", 0.0))


def solve_stcb(instance: ScpInstance, rowgen_config: RowGenConfig | None = None,
               k: int = 2, mode: str = "warmstart", slack: int | None = None,
               solve_config: SolveConfig | None = None) -> StcbResult:
    """Run pretrain -> gram -> cluster -> cuts -> augmented solve.

    The fallback guard bounds the damage of a bad cut pair: if the augmented
    solve proves infeasible, or by a quarter of the time limit its incumbent
    still trails the plain greedy cover, the instance is re-solved without
    cuts on the remaining budget and the result is flagged.
    """
    solve_config = solve_config or SolveConfig()
    if rowgen_config is None:
        # keep pre-training a small fraction of the overall budget by default
        sub_budget = max(1.0, 0.1 * solve_config.time_limit)
        rowgen_config = RowGenConfig(sub_solve_config=SolveConfig(
            time_limit=sub_budget, seed=solve_config.seed))
    t0 = time.monotonic()
    stage: dict[str, float] = {}

    pre = pretrain(instance, rowgen_config)
    stage["pretrain"] = time.monotonic() - t0

    t1 = time.monotonic()
    gram = normalized_gram(instance)
    stage["gram"] = time.monotonic() - t1

    t2 = time.monotonic()
    clusters = spectral_partition(gram, k, solve_config.seed)
    partition, cuts = derive_cuts(clusters, pre.x_star_sub, mode, slack)
    stage["partition"] = time.monotonic() - t2
    stage["setup"] = time.monotonic() - t0

    greedy_obj = greedy_cover(instance).objective
    checkpoint = FALLBACK_CHECKPOINT * solve_config.time_limit

    def trailing_greedy(elapsed: float, incumbent: int | None) -> bool:
        return elapsed >= checkpoint and (incumbent is None or incumbent > greedy_obj)

    t3 = time.monotonic()
    attempt = solve(instance, cuts.as_list(), solve_config, abort_check=trailing_greedy)
    stage["solve"] = time.monotonic() - t3

    fallback = False
    reason = None
    final = attempt
    if attempt.status == STATUS_INFEASIBLE:
        fallback, reason = True, "augmented problem infeasible"
    elif attempt.aborted:
        fallback, reason = True, "incumbent trailing greedy at checkpoint"
    if fallback:
        used = time.monotonic() - t3
        remaining = max(solve_config.time_limit - used, 0.1 * solve_config.time_limit)
        final = solve(instance, (), replace(solve_config, time_limit=remaining))
        stage["solve"] = time.monotonic() - t3
    return StcbResult(final, pre, partition, cuts, fallback, reason, stage,
                      attempt if fallback else None)


# --- exports ------------------------------------------------------------------

def write_cuts_json(cuts: CardinalityCuts, path) -> None:
    payload = {
        "S_plus": sorted(cuts.upper.support),
        "xi_plus": cuts.upper.rhs,
        "S_minus": sorted(cuts.lower.support),
        "xi_minus": cuts.lower.rhs,
        "mode": cuts.mode,
        "slack": cuts.slack,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_cuts_json(path) -> CardinalityCuts:
    with open(path) as fh:
        payload = json.load(fh)
    return CardinalityCuts(
        LinearCut(frozenset(payload["S_plus"]), GE, int(payload["xi_plus"])),
        LinearCut(frozenset(payload["S_minus"]), LE, int(payload["xi_minus"])),
        payload["mode"], int(payload["slack"]))


def write_partition_csv(partition: VariablePartition, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["column", "cluster"])
        for idx, cluster in enumerate(partition.clusters):
            for col in sorted(cluster):
                writer.writerow([col, idx])
