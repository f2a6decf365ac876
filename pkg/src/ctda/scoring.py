"""Unsupervised scoring and separation of noisy discrete observations.

Pipeline: pool every pixel of a noisy corpus into one output marginal,
invert the channel to recover the pooled source, build the divergence
transition matrix, and score each image by summing the per-symbol scores of
its pixels.  Sorting by score splits a balanced two-source mixture without
ever reading a label; labels, when present, are only consulted afterwards
to measure the separation error.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .coupling import (
    ScoreTable,
    build_dtm,
    optimal_directions,
    replace_direction,
    score_table,
    sequence_score,
    solve_coupling,
)
from .dataio import ImageDataset, apply_channel_to_dataset, gen_two_class_images
from .stats import (
    Channel,
    DiscreteDistribution,
    empirical_distribution,
    parametric_channel,
    smoothed_distribution,
)

# Recovered source entries more negative than this are treated as a modeling
# inconsistency rather than sampling noise.
NEGATIVITY_TOL = 1e-6


@dataclass(frozen=True)
class ScoredItem:
    """One scored image: corpus position, score, and optional true label."""

    index: int
    score: float
    label: Optional[int] = None

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("score must be finite")


@dataclass(frozen=True)
class CurvePoint:
    """One noise level of an error-vs-noise sweep."""

    e: float
    error_probability: float
    n_images: int
    seed: int


def learn_pooled_source(dataset, smooth: bool = False) -> DiscreteDistribution:
    """Empirical symbol distribution pooled over every pixel of a corpus."""
    pixels = dataset.images if isinstance(dataset, ImageDataset) else np.asarray(dataset)
    alphabet = (
        dataset.alphabet_size
        if isinstance(dataset, ImageDataset)
        else max(2, int(pixels.max()) + 1)
    )
    estimator = smoothed_distribution if smooth else empirical_distribution
    return estimator(pixels.reshape(-1), alphabet)


def recover_source_input(
    p_y: DiscreteDistribution, channel: Channel, tol: float = NEGATIVITY_TOL
) -> DiscreteDistribution:
    """Invert ``p_y = W p_x`` for the source distribution.

    Requires a square invertible channel.  Entries more negative than
    ``-tol`` mean the observed marginal cannot come from this channel;
    smaller negatives (sampling noise) are clipped and the result
    renormalized.
    """
    if channel.n_inputs != channel.n_outputs:
        raise ValueError("source recovery needs a square channel")
    if p_y.size != channel.n_outputs:
        raise ValueError("marginal does not match the channel's output alphabet")
    try:
        raw = np.linalg.solve(channel.matrix, p_y.probs)
    except np.linalg.LinAlgError:
        raise ValueError("channel is not invertible") from None
    if np.any(raw < -tol):
        raise ValueError(
            f"inconsistent channel/source: recovered probability "
            f"{float(raw.min())!r} below -{tol}"
        )
    clipped = np.maximum(raw, 0.0)
    return DiscreteDistribution(clipped / clipped.sum())


def _lenient_source(p_y: DiscreteDistribution, channel: Channel) -> np.ndarray:
    """Channel inversion that clips any negativity (per-pixel small samples)."""
    raw = np.linalg.solve(channel.matrix, p_y.probs)
    clipped = np.maximum(raw, 0.0)
    return clipped / clipped.sum()


def build_image_scorer(pixels, channel: Channel, smooth: bool = False) -> ScoreTable:
    """Score table learned from noisy pixels alone (no labels involved).

    ``pixels`` is the raw ``(n_images, n_pixels)`` symbol matrix of the
    noisy corpus; labels deliberately have no way in here.

    When the channel treats several perturbation directions identically
    (degenerate optimal subspace, e.g. a noiseless channel) the solver's
    choice within that subspace is arbitrary, so the tie is broken
    empirically: among the tied directions, take the one under which the
    per-image scores vary most across the corpus.  Still entirely
    unsupervised -- it reads pixel counts, never labels.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.size == 0:
        raise ValueError("need a non-empty (n_images, n_pixels) matrix")
    estimator = smoothed_distribution if smooth else empirical_distribution
    p_y = estimator(pixels.reshape(-1), channel.n_outputs)
    p_x = recover_source_input(p_y, channel)
    if (p_x.probs > 0).sum() < 2:
        raise ValueError("recovered source concentrates on a single symbol")
    dtm = build_dtm(channel, p_x)
    solution = solve_coupling(dtm)
    if solution.degenerate_subspace:
        solution = _max_variance_direction(solution, dtm, pixels, channel.n_outputs)
    return score_table(solution, dtm)


def _max_variance_direction(solution, dtm, pixels, alphabet):
    """Break a degenerate coupling tie by maximizing empirical score variance.

    The image score under direction ``psi`` is linear in ``psi``:
    ``S_i = (c_i / sqrt(p_y))^T B psi`` with ``c_i`` the image's symbol
    counts.  Its corpus variance is a quadratic form, so the best tied
    direction is the top eigenvector of that form restricted to the optimal
    subspace.
    """
    subspace = optimal_directions(dtm, solution)
    if subspace.shape[1] < 2:
        return solution
    counts = np.stack(
        [np.bincount(img, minlength=alphabet) for img in pixels]
    ).astype(float)
    r = counts[:, dtm.output_symbols] / np.sqrt(dtm.p_y.probs)
    r -= r.mean(axis=0)
    image = dtm.matrix @ subspace  # (Ky, k): output images of the tied basis
    form = image.T @ ((r.T @ r) / pixels.shape[0]) @ image
    eigvals, eigvecs = np.linalg.eigh(form)
    return replace_direction(solution, dtm, subspace @ eigvecs[:, -1])


def score_dataset(dataset: ImageDataset, table: ScoreTable) -> list:
    """Score every image; labels (if present) are carried along for later
    evaluation only."""
    if dataset.alphabet_size > table.scores.size:
        raise ValueError("score table does not cover the dataset's alphabet")
    totals = table.scores[dataset.images].sum(axis=1)
    labels = dataset.labels
    return [
        ScoredItem(
            index=i,
            score=float(totals[i]),
            label=None if labels is None else int(labels[i]),
        )
        for i in range(dataset.n_images)
    ]


def score_dataset_per_pixel(
    dataset: ImageDataset, channel: Channel, smooth: bool = True
) -> list:
    """Variant fitting one score table per pixel position.

    Useful when pixel statistics vary across the image.  Per-pixel sample
    sizes are small, so marginals are smoothed by default and inversion
    negativity is clipped rather than rejected; a pixel whose recovered
    source has fewer than two live symbols contributes nothing.
    """
    n, n_pix = dataset.images.shape
    if n == 0:
        raise ValueError("empty dataset")
    estimator = smoothed_distribution if smooth else empirical_distribution
    per_pixel = np.zeros((n_pix, channel.n_outputs))
    for j in range(n_pix):
        p_y = estimator(dataset.images[:, j], channel.n_outputs)
        p_x = _lenient_source(p_y, channel)
        if (p_x > 0).sum() < 2:
            continue  # constant pixel: no direction to detect
        dtm = build_dtm(channel, DiscreteDistribution(p_x))
        table = score_table(solve_coupling(dtm), dtm)
        per_pixel[j] = table.scores
    totals = per_pixel[np.arange(n_pix)[None, :], dataset.images].sum(axis=1)
    labels = dataset.labels
    return [
        ScoredItem(
            index=i,
            score=float(totals[i]),
            label=None if labels is None else int(labels[i]),
        )
        for i in range(n)
    ]


def separation_error(items: Sequence[ScoredItem]) -> float:
    """Fraction of a balanced two-class corpus misplaced by score sorting.

    The low-score half is assigned to one class and the high-score half to
    the other, in whichever of the two orientations errs less (the scores
    carry an arbitrary overall sign).
    """
    if not items:
        raise ValueError("nothing to evaluate")
    if any(item.label is None for item in items):
        raise ValueError("separation error needs labeled items")
    labels = np.array([item.label for item in items])
    classes = np.unique(labels)
    if classes.size != 2:
        raise ValueError(f"need exactly two classes, got {classes.size}")
    counts = [(labels == c).sum() for c in classes]
    if counts[0] != counts[1]:
        raise ValueError("classes must be balanced")
    order = np.argsort([item.score for item in items], kind="stable")
    low_half = labels[order[: counts[0]]]
    wrong_a = int((low_half != classes[0]).sum())  # low half called class 0
    wrong_b = int((low_half != classes[1]).sum())  # low half called class 1
    return 2.0 * min(wrong_a, wrong_b) / len(items)


def _curve_point(
    index: int,
    e: float,
    seed: int,
    dist_a: DiscreteDistribution,
    dist_b: DiscreteDistribution,
    width: int,
    height: int,
    n_per_class: int,
) -> CurvePoint:
    point_seed = seed ^ index
    gen_seed, noise_seed = np.random.SeedSequence(point_seed).generate_state(2)
    clean = gen_two_class_images(int(gen_seed), n_per_class, width, height, dist_a, dist_b)
    channel = parametric_channel(e)
    noisy = apply_channel_to_dataset(clean, channel, int(noise_seed))
    table = build_image_scorer(noisy.images, channel)
    error = separation_error(score_dataset(noisy, table))
    return CurvePoint(
        e=float(e),
        error_probability=error,
        n_images=noisy.n_images,
        seed=point_seed,
    )


def resolve_threads(requested: int = 0) -> int:
    """Worker count for sweeps: explicit, else CTDA_THREADS, else one per CPU
    (0 means auto at either level)."""
    if requested < 0:
        raise ValueError("thread count cannot be negative")
    count = requested
    if count == 0:
        env = os.environ.get("CTDA_THREADS", "0")
        try:
            count = int(env)
        except ValueError:
            raise ValueError(f"CTDA_THREADS={env!r} is not an integer") from None
        if count < 0:
            raise ValueError("CTDA_THREADS cannot be negative")
    if count == 0:
        count = os.cpu_count() or 1
    return count


def error_vs_noise_curve(
    dist_a: DiscreteDistribution,
    dist_b: DiscreteDistribution,
    width: int,
    height: int,
    n_per_class: int,
    e_grid,
    seed: int,
    threads: int = 0,
) -> list:
    """Separation error of freshly generated corpora across noise levels.

    Each grid point gets its own corpus and channel noise, deterministically
    derived from ``seed`` and the point's position (seed XOR index), so the
    curve is reproducible regardless of the number of worker threads.
    """
    grid = [float(e) for e in e_grid]
    if not grid:
        raise ValueError("empty noise grid")
    workers = min(resolve_threads(threads), len(grid))
    args = [
        (i, e, seed, dist_a, dist_b, width, height, n_per_class)
        for i, e in enumerate(grid)
    ]
    if workers == 1:
        return [_curve_point(*a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda a: _curve_point(*a), args))


# --- CSV output -------------------------------------------------------------


def save_scores_csv(items: Sequence[ScoredItem], path) -> None:
    """Write ``index,label,score`` rows (label cell blank when unlabeled)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label", "score"])
        for item in items:
            label = "" if item.label is None else int(item.label)
            writer.writerow([item.index, label, repr(item.score)])


def save_curve_csv(points: Sequence[CurvePoint], path) -> None:
    """Write ``e,error_probability,n_images,seed`` rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["e", "error_probability", "n_images", "seed"])
        for pt in points:
            writer.writerow(
                [repr(pt.e), repr(pt.error_probability), pt.n_images, pt.seed]
            )
