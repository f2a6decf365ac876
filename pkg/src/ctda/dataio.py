"""Time-series and image-dataset containers, CSV ingestion and generators.

CSV layouts:

* time series: header ``date,value`` (column names overridable); the date
  column holds either plain integers or ISO ``YYYY-MM-DD`` dates, which are
  mapped to proleptic-Gregorian ordinals so gaps and ordering survive.
* image datasets: header ``label,p0,p1,...``; the label cell may be blank
  when the dataset is unlabeled.

All random generation is driven by explicit integer seeds through
``numpy.random.default_rng`` so identical calls reproduce identical data.
"""

from __future__ import annotations

import csv
import datetime as _dt
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .stats import Channel, DiscreteDistribution


class FileFormatError(ValueError):
    """A data file exists but cannot be parsed as its declared format."""


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A named scalar series sampled at strictly increasing integer times.

    ``iso_dates`` records whether the timestamps were parsed from calendar
    dates (and should be rendered back as such) or were plain integers.
    """

    name: str
    timestamps: np.ndarray
    values: np.ndarray
    iso_dates: bool = False

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        if ts.ndim != 1 or vals.ndim != 1 or ts.size != vals.size:
            raise ValueError("timestamps and values must be 1-D and equal length")
        if ts.size == 0:
            raise ValueError(f"series {self.name!r} is empty")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            at = int(np.flatnonzero(np.diff(ts) <= 0)[0])
            raise ValueError(
                f"series {self.name!r}: timestamps not strictly increasing "
                f"at position {at + 1}"
            )
        if not np.all(np.isfinite(vals)):
            at = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise ValueError(f"series {self.name!r}: non-finite value at position {at}")

    def __len__(self) -> int:
        return int(self.timestamps.size)


def format_timestamp(ts: int, iso: bool) -> str:
    if iso:
        return _dt.date.fromordinal(int(ts)).isoformat()
    return str(int(ts))


def _parse_time_cell(cell: str, line: int):
    """Return (ordinal_or_int, is_iso) for one date cell."""
    text = cell.strip()
    try:
        return int(text), False
    except ValueError:
        pass
    try:
        return _dt.date.fromisoformat(text).toordinal(), True
    except ValueError:
        raise FileFormatError(
            f"line {line}: cannot parse {cell!r} as an integer or ISO date"
        ) from None


def load_csv(path, time_column: str = "date", value_column: str = "value") -> TimeSeries:
    """Load one time series from a two-column CSV file.

    The series name is the file stem.  Duplicate or out-of-order timestamps,
    non-numeric or non-finite values, and missing columns are all rejected
    with the offending line number.
    """
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        try:
            t_idx = header.index(time_column)
            v_idx = header.index(value_column)
        except ValueError:
            raise FileFormatError(
                f"{path}: header {header!r} lacks columns "
                f"{time_column!r}/{value_column!r}"
            ) from None

        times: list[int] = []
        values: list[float] = []
        iso = False
        seen: dict[int, str] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue  # stray blank line
            if len(row) <= max(t_idx, v_idx):
                raise FileFormatError(f"{path}: line {line_no}: too few columns")
            try:
                ts, row_iso = _parse_time_cell(row[t_idx], line_no)
            except FileFormatError as exc:
                raise FileFormatError(f"{path}: {exc}") from None
            if times and row_iso != iso:
                raise FileFormatError(
                    f"{path}: line {line_no}: mixed integer and ISO-date timestamps"
                )
            iso = row_iso
            if ts in seen:
                raise FileFormatError(
                    f"{path}: line {line_no}: duplicate timestamp {row[t_idx].strip()!r}"
                )
            seen[ts] = row[t_idx]
            try:
                val = float(row[v_idx])
            except ValueError:
                raise FileFormatError(
                    f"{path}: line {line_no}: cannot parse value {row[v_idx]!r}"
                ) from None
            if not np.isfinite(val):
                raise FileFormatError(
                    f"{path}: line {line_no}: non-finite value {row[v_idx]!r}"
                )
            times.append(ts)
            values.append(val)
    if not times:
        raise FileFormatError(f"{path}: no data rows")
    if np.any(np.diff(times) <= 0):
        at = int(np.flatnonzero(np.diff(np.asarray(times)) <= 0)[0])
        raise FileFormatError(
            f"{path}: line {at + 3}: timestamps not strictly increasing"
        )
    return TimeSeries(name, np.asarray(times), np.asarray(values), iso_dates=iso)


def save_csv(series: TimeSeries, path, time_column="date", value_column="value") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([time_column, value_column])
        for ts, val in zip(series.timestamps, series.values):
            writer.writerow([format_timestamp(ts, series.iso_dates), repr(float(val))])


ALIGN_POLICIES = ("inner", "forward_fill")


def align(series: Sequence[TimeSeries], policy: str = "inner"):
    """Place several series on one shared clock.

    ``inner`` keeps only timestamps present in every series; ``forward_fill``
    keeps the union of timestamps (starting once every series has begun) and
    carries each series' last observation forward across its gaps.

    Returns ``(timestamps, matrix)`` with ``matrix[m, t]`` the value of
    series ``m`` at shared time ``t``.
    """
    if len(series) < 2:
        raise ValueError("alignment needs at least two series")
    if policy not in ALIGN_POLICIES:
        raise ValueError(f"unknown alignment policy {policy!r}")
    if policy == "inner":
        shared = series[0].timestamps
        for s in series[1:]:
            shared = np.intersect1d(shared, s.timestamps, assume_unique=True)
        if shared.size == 0:
            raise ValueError("series share no timestamps under inner alignment")
        rows = []
        for s in series:
            idx = np.searchsorted(s.timestamps, shared)
            rows.append(s.values[idx])
        return shared, np.vstack(rows)

    start = max(int(s.timestamps[0]) for s in series)
    shared = np.unique(np.concatenate([s.timestamps for s in series]))
    shared = shared[shared >= start]
    rows = []
    for s in series:
        # index of the last observation at or before each shared timestamp
        idx = np.searchsorted(s.timestamps, shared, side="right") - 1
        rows.append(s.values[idx])
    return shared, np.vstack(rows)


def split(values: np.ndarray, train_range, test_range, history: int = 0):
    """Cut train/test blocks out of an aligned value array.

    Ranges are half-open ``(start, stop)`` index pairs along the last axis;
    the test block is widened by ``history`` leading samples so models with
    memory can produce an estimate at the first test index.
    """
    values = np.asarray(values)
    n = values.shape[-1]
    (a, b), (c, d) = train_range, test_range
    if not (0 <= a < b <= n) or not (0 <= c < d <= n):
        raise ValueError(f"ranges must be within [0, {n}] and non-empty")
    if b > c:
        raise ValueError("training range must end before the test range begins")
    if history < 0 or history > c:
        raise ValueError("history must be >= 0 and not reach before index 0")
    return values[..., a:b], values[..., c - history : d]


def gen_fir_series(
    seed: int,
    n: int,
    coeffs: Sequence[Sequence[float]],
    input_process: str = "iid_gaussian",
    noise_sigma: float = 0.0,
):
    """Synthesize input channels and their tap-delay-line combination.

    Each entry of ``coeffs`` is one channel's tap vector ``c``; the target is
    ``y[t] = sum_m sum_l c_m[l] * x_m[t - l] + noise``, with ``x_m[t] = 0``
    for ``t < 0``.  Returns ``(x, y)`` where ``x`` has shape ``(M, n)``.
    """
    taps = [np.asarray(c, dtype=float) for c in coeffs]
    if not taps:
        raise ValueError("need at least one channel of coefficients")
    if any(t.ndim != 1 or t.size == 0 for t in taps):
        raise ValueError("each coefficient vector must be non-empty and 1-D")
    if n <= max(t.size for t in taps):
        raise ValueError("series length must exceed the longest tap vector")
    if noise_sigma < 0:
        raise ValueError("noise level must be nonnegative")
    if input_process not in ("iid_gaussian", "iid_binary"):
        raise ValueError(f"unknown input process {input_process!r}")

    rng = np.random.default_rng(seed)
    if input_process == "iid_gaussian":
        x = rng.standard_normal((len(taps), n))
    else:
        x = rng.integers(0, 2, size=(len(taps), n)) * 2.0 - 1.0
    y = np.zeros(n)
    for xm, c in zip(x, taps):
        y += np.convolve(xm, c)[:n]
    if noise_sigma > 0:
        y += noise_sigma * rng.standard_normal(n)
    return x, y


@dataclass(frozen=True, eq=False)
class ImageDataset:
    """Flattened discrete-valued images with optional integer labels.

    ``images[i]`` is image ``i`` in row-major pixel order; every pixel is a
    symbol in ``0 .. alphabet_size - 1``.
    """

    width: int
    height: int
    alphabet_size: int
    images: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        imgs = np.asarray(self.images, dtype=np.int64)
        object.__setattr__(self, "images", imgs)
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.alphabet_size < 2:
            raise ValueError("pixel alphabet needs at least 2 symbols")
        if imgs.ndim != 2 or imgs.shape[1] != self.width * self.height:
            raise ValueError(
                f"images must be (n, {self.width * self.height}); got {imgs.shape}"
            )
        if imgs.size and (imgs.min() < 0 or imgs.max() >= self.alphabet_size):
            raise ValueError("pixel value outside alphabet")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            object.__setattr__(self, "labels", labels)
            if labels.shape != (imgs.shape[0],):
                raise ValueError("need exactly one label per image")

    @property
    def n_images(self) -> int:
        return int(self.images.shape[0])

    @property
    def n_pixels(self) -> int:
        return int(self.images.shape[1])


def gen_two_class_images(
    seed: int,
    n_per_class: int,
    width: int,
    height: int,
    dist_a: DiscreteDistribution,
    dist_b: DiscreteDistribution,
) -> ImageDataset:
    """Draw a balanced two-class corpus of i.i.d.-pixel images.

    Class 0 pixels are i.i.d. ``dist_a``; class 1 pixels i.i.d. ``dist_b``.
    Both distributions must share an alphabet.  Labels are attached.
    """
    if dist_a.size != dist_b.size:
        raise ValueError("class distributions must share an alphabet")
    if n_per_class < 1:
        raise ValueError("need at least one image per class")
    rng = np.random.default_rng(seed)
    shape = (n_per_class, width * height)
    imgs_a = rng.choice(dist_a.size, size=shape, p=dist_a.probs)
    imgs_b = rng.choice(dist_b.size, size=shape, p=dist_b.probs)
    images = np.concatenate([imgs_a, imgs_b], axis=0)
    labels = np.concatenate(
        [np.zeros(n_per_class, dtype=np.int64), np.ones(n_per_class, dtype=np.int64)]
    )
    return ImageDataset(width, height, dist_a.size, images, labels)


def apply_channel_to_dataset(dataset: ImageDataset, channel: Channel, seed: int) -> ImageDataset:
    """Pass every pixel independently through a discrete channel.

    The output dataset lives on the channel's output alphabet; labels (if
    any) are carried over unchanged.
    """
    if channel.n_inputs != dataset.alphabet_size:
        raise ValueError(
            f"channel expects {channel.n_inputs} input symbols, dataset has "
            f"{dataset.alphabet_size}"
        )
    rng = np.random.default_rng(seed)
    # Inverse-CDF sampling per pixel: column cum[x] is the output CDF for
    # input symbol x, and u in [0, 1) picks the first level above u.
    cum = np.cumsum(channel.matrix, axis=0).T  # (Kx, Ky)
    u = rng.random(dataset.images.shape)
    noisy = np.sum(cum[dataset.images] <= u[..., None], axis=-1)
    return ImageDataset(
        dataset.width,
        dataset.height,
        channel.n_outputs,
        noisy.astype(np.int64),
        None if dataset.labels is None else dataset.labels.copy(),
    )


def load_images_csv(
    path,
    width: Optional[int] = None,
    height: Optional[int] = None,
    alphabet_size: Optional[int] = None,
) -> ImageDataset:
    """Load an image dataset from ``label,p0,p1,...`` CSV.

    When the geometry is unknown the images are treated as 1 x n_pixels
    strips; the alphabet defaults to the largest pixel value + 1 (but at
    least 2 symbols).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "label" or len(header) < 2:
            raise FileFormatError(
                f"{path}: expected header 'label,p0,...'; got {header!r}"
            )
        n_pixels = len(header) - 1
        rows = []
        labels: list[int] = []
        blank_labels = 0
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n_pixels + 1:
                raise FileFormatError(
                    f"{path}: line {line_no}: expected {n_pixels + 1} cells, "
                    f"got {len(row)}"
                )
            cell = row[0].strip()
            if cell:
                try:
                    labels.append(int(cell))
                except ValueError:
                    raise FileFormatError(
                        f"{path}: line {line_no}: bad label {row[0]!r}"
                    ) from None
            else:
                blank_labels += 1
            try:
                rows.append([int(c) for c in row[1:]])
            except ValueError:
                raise FileFormatError(
                    f"{path}: line {line_no}: non-integer pixel value"
                ) from None
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    if blank_labels and labels:
        raise FileFormatError(f"{path}: mix of labeled and unlabeled rows")
    images = np.asarray(rows, dtype=np.int64)
    if width is None or height is None:
        width, height = n_pixels, 1
    if width * height != n_pixels:
        raise ValueError(
            f"declared {width}x{height} geometry does not match {n_pixels} pixels"
        )
    if alphabet_size is None:
        alphabet_size = max(2, int(images.max()) + 1) if images.size else 2
    return ImageDataset(
        width,
        height,
        alphabet_size,
        images,
        np.asarray(labels, dtype=np.int64) if labels else None,
    )


def save_images_csv(dataset: ImageDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"p{i}" for i in range(dataset.n_pixels)])
        for i in range(dataset.n_images):
            label = "" if dataset.labels is None else int(dataset.labels[i])
            writer.writerow([label] + [int(v) for v in dataset.images[i]])
