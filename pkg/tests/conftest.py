"""Shared builders and oracles for the test suite."""

import numpy as np
import pytest

from prsadjust.genotypes import GenotypeMatrix, SampleRecord, Variant


def make_matrix(dosage, variant_ids=None, sample_ids=None, alleles=None, missing=()):
    """Build a GenotypeMatrix from a nested list of dosages.

    ``missing`` is an iterable of (row, col) index pairs; ``alleles`` maps a
    variant id to a (ref, alt) pair, defaulting to ("A", "G").
    """
    dosage = np.asarray(dosage, dtype=np.float64)
    n, m = dosage.shape
    if variant_ids is None:
        variant_ids = [f"rs{j + 1}" for j in range(m)]
    if sample_ids is None:
        sample_ids = [f"S{i + 1}" for i in range(n)]
    alleles = alleles or {}
    variants = tuple(
        Variant(
            id=vid,
            chromosome="1",
            position=100 * (j + 1),
            ref_allele=alleles.get(vid, ("A", "G"))[0],
            alt_allele=alleles.get(vid, ("A", "G"))[1],
        )
        for j, vid in enumerate(variant_ids)
    )
    samples = tuple(SampleRecord(sample_id=sid) for sid in sample_ids)
    mask = np.zeros((n, m), dtype=bool)
    for i, j in missing:
        mask[i, j] = True
    return GenotypeMatrix(samples=samples, variants=variants, dosage=dosage, missing_mask=mask)


def silhouette_score(points, labels):
    """Mean silhouette coefficient, computed by brute force.

    s(i) = (b(i) - a(i)) / max(a(i), b(i)) with a = mean distance to own
    cluster (excluding self) and b = min over other clusters of the mean
    distance to that cluster.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    diffs = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2))
    scores = np.empty(len(points))
    for i in range(len(points)):
        own = labels == labels[i]
        n_own = own.sum()
        a = dist[i, own].sum() / (n_own - 1) if n_own > 1 else 0.0
        b = min(dist[i, labels == other].mean() for other in uniq if other != labels[i])
        scores[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return float(scores.mean())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
