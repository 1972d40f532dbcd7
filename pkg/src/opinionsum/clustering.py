"""Threshold-bounded agglomerative clustering of classified phrases.

Within each (aspect, sentiment) group of a target, phrases start as
singletons and the closest pair of clusters merges repeatedly until the
minimal linkage distance exceeds the threshold.  With complete linkage the
stopping rule guarantees every intra-cluster pairwise Euclidean distance
stays within the threshold.
"""

import json
from dataclasses import dataclass, field

import numpy as np

_LINKAGES = ("complete", "average", "single")


@dataclass
class ClusterConfig:
    threshold: float = 7.0
    linkage: str = "complete"

    def validate(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.linkage not in _LINKAGES:
            raise ValueError(f"linkage must be one of {_LINKAGES}")


@dataclass
class OpinionCluster:
    aspect: str
    sentiment: str
    members: list[str]  # phrase ids, ascending


@dataclass
class OpinionSummary:
    target_id: str
    groups: dict[tuple[str, str], list[OpinionCluster]] = field(default_factory=dict)


def agglomerate(points: list[tuple[str, np.ndarray]], config: ClusterConfig) -> list[list[str]]:
    """Cluster (id, vector) points; returns member-id lists.

    Euclidean base metric; the linkage matrix is updated in place on merge
    (max/min for complete/single reproduce a from-scratch recomputation
    bit-for-bit; average uses the size-weighted update).  Deterministic:
    points are processed in id order and distance ties break on the pair
    with the lexicographically smallest min-member-id keys, so permuting
    the input cannot change the partition.  Clusters come back ordered by
    smallest member id, members ascending.
    """
    config.validate()
    if not points:
        return []
    points = sorted(points, key=lambda p: p[0])
    ids = [pid for pid, _ in points]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate point ids")
    vecs = np.vstack([np.asarray(v, dtype=float) for _, v in points])
    if any(len(np.asarray(v).ravel()) != vecs.shape[1] for _, v in points):
        raise ValueError("dimension mismatch among points")
    n = len(ids)

    diff = vecs[:, None, :] - vecs[None, :, :]
    link = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(link, np.inf)

    members: list[list[int] | None] = [[i] for i in range(n)]
    sizes = np.ones(n)
    remaining = n
    while remaining > 1:
        m = link.min()
        if m > config.threshold:
            break
        best = None
        for a, b in np.argwhere(link == m):
            if a >= b:
                continue
            lo, hi = sorted((ids[members[a][0]], ids[members[b][0]]))
            if best is None or (lo, hi) < best[0]:
                best = ((lo, hi), int(a), int(b))
        _, i, j = best
        if config.linkage == "complete":
            row = np.maximum(link[i], link[j])
        elif config.linkage == "single":
            row = np.minimum(link[i], link[j])
        else:
            row = (sizes[i] * link[i] + sizes[j] * link[j]) / (sizes[i] + sizes[j])
        row[i] = np.inf
        link[i, :] = row
        link[:, i] = row
        link[j, :] = np.inf
        link[:, j] = np.inf
        members[i] = sorted(members[i] + members[j])
        members[j] = None
        sizes[i] += sizes[j]
        remaining -= 1

    clusters = sorted((c for c in members if c is not None), key=lambda c: ids[c[0]])
    return [[ids[k] for k in c] for c in clusters]


def build_summary(
    target_id: str,
    phrases,
    aspect_labels: dict,
    sentiment_labels: dict,
    embeddings: dict,
    config: ClusterConfig,
) -> OpinionSummary:
    """Group a target's phrases by (aspect, sentiment) and cluster each group.

    Phrases labeled None in either schema are excluded.  Clusters are ordered
    by size descending (ties by smallest member id), members by phrase id.
    """
    groups: dict[tuple[str, str], list] = {}
    for phrase in phrases:
        aspect = aspect_labels.get(phrase.id)
        sentiment = sentiment_labels.get(phrase.id)
        if aspect is None or sentiment is None:
            continue
        groups.setdefault((aspect, sentiment), []).append(phrase)

    summary = OpinionSummary(target_id)
    for key in sorted(groups):
        aspect, sentiment = key
        pts = [(p.id, embeddings[p.id]) for p in groups[key]]
        parts = agglomerate(pts, config)
        parts.sort(key=lambda members: (-len(members), members[0]))
        summary.groups[key] = [OpinionCluster(aspect, sentiment, members) for members in parts]
    return summary


def summary_to_json(summaries: list[OpinionSummary], surfaces: dict) -> str:
    """Spec'd output shape: target -> {"aspect|sentiment": [clusters]}."""
    out = {}
    for summary in summaries:
        per_target = {}
        for (aspect, sentiment), clusters in sorted(summary.groups.items()):
            entries = []
            for k, cluster in enumerate(clusters):
                entries.append(
                    {
                        "cluster_id": f"{summary.target_id}/{aspect}|{sentiment}/{k:03d}",
                        "phrases": [surfaces[pid] for pid in cluster.members],
                    }
                )
            per_target[f"{aspect}|{sentiment}"] = entries
        out[summary.target_id] = per_target
    return json.dumps(out, sort_keys=True, indent=2)
