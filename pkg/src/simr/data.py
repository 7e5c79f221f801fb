"""Dataset container, predictor standardization, response slicing, moments.

Every sliced estimator in this package consumes the same substrate built
here: standardized predictors z = Sigma^{-1/2} (x - mean), a partition of
the observations into slices by sorted response, and the per-slice first
and second sample moments of z.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DataFileError,
    NonFiniteInput,
    SingularCovariance,
    TooManySlices,
)

# Smallest acceptable eigenvalue of the predictor covariance, relative to
# the largest; below this the inverse square root is numerically meaningless.
EIGENVALUE_RATIO_FLOOR = 1e-12


@dataclass(frozen=True)
class Dataset:
    """A regression sample: raw predictors ``x`` (n x p) and response ``y`` (n,)."""

    x: np.ndarray
    y: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        if y.shape[0] != x.shape[0]:
            raise ValueError("y length must match the number of rows of x")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise NonFiniteInput("predictors and response must be finite")
        n, p = x.shape
        # n >= p + 2 keeps the sample covariance invertible with probability 1
        # for continuous predictors.
        if n < p + 2:
            raise ValueError(f"need n >= p + 2 observations, got n={n}, p={p}")
        if self.column_names is not None and len(self.column_names) != p:
            raise ValueError("column_names length must equal p")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class StandardizedData:
    """Standardized predictors with the quantities used to build them.

    ``z`` satisfies z_i = sigma_inv_sqrt @ (x_i - mu_hat) row-wise, where
    ``sigma_hat`` is the usual n-1 sample covariance and ``sigma_inv_sqrt``
    its symmetric (eigendecomposition) inverse square root.
    """

    z: np.ndarray
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    sigma_inv_sqrt: np.ndarray

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class SliceAssignment:
    """Partition of observations into slices by sorted response.

    ``labels`` holds 0-based slice indices per observation; labels are
    monotone non-decreasing along the response sort order, and tied
    response values share a slice unless a tie group spans more than one
    whole slice.
    """

    n_slices: int
    labels: np.ndarray
    counts: np.ndarray

    @property
    def f_hat(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class SliceMoments:
    """Per-slice sample moments of standardized predictors.

    ``zbar[h]`` is the mean of z over slice h, ``zzbar[h]`` the mean of
    z z' over slice h, ``f_hat[h]`` the slice proportion, and ``counts[h]``
    the slice size. These are the sufficient statistics for every sliced
    estimator in the package.
    """

    zbar: np.ndarray   # (H, p)
    zzbar: np.ndarray  # (H, p, p)
    f_hat: np.ndarray  # (H,)
    counts: np.ndarray  # (H,)

    @property
    def n_slices(self) -> int:
        return self.zbar.shape[0]

    @property
    def p(self) -> int:
        return self.zbar.shape[1]

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def standardize(data: Dataset) -> StandardizedData:
    """Center and whiten the predictors with the sample mean and covariance.

    Uses the symmetric inverse square root of the n-1 sample covariance so
    that the returned ``sigma_inv_sqrt`` is itself symmetric.

    Raises ``SingularCovariance`` when the covariance eigenvalue ratio falls
    below ``EIGENVALUE_RATIO_FLOOR``.
    """
    mu = data.x.mean(axis=0)
    xc = data.x - mu
    sigma = xc.T @ xc / (data.n - 1)
    evals, evecs = np.linalg.eigh(sigma)
    if evals[0] <= EIGENVALUE_RATIO_FLOOR * evals[-1] or evals[-1] <= 0.0:
        raise SingularCovariance(
            "predictor covariance is numerically singular "
            f"(eigenvalue ratio {evals[0] / max(evals[-1], np.finfo(float).tiny):.3e})"
        )
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    z = xc @ inv_sqrt
    return StandardizedData(z=z, mu_hat=mu, sigma_hat=sigma, sigma_inv_sqrt=inv_sqrt)


def slice_by_response(y: np.ndarray, n_slices: int) -> SliceAssignment:
    """Partition observations into ``n_slices`` groups of sorted response.

    Target sizes are as equal as possible (larger slices first). A group of
    tied response values that straddles a single slice boundary is moved
    wholesale to the side holding its majority; a tie group wide enough to
    cover more than one boundary is split at the ideal cut points, since
    keeping it whole is impossible. Raises ``TooManySlices`` when the
    adjustment would leave an empty slice.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    if not np.isfinite(y).all():
        raise NonFiniteInput("response must be finite")
    if n_slices < 2 or n_slices > n // 2:
        raise ValueError(f"n_slices must satisfy 2 <= H <= n/2, got H={n_slices}, n={n}")

    order = np.argsort(y, kind="stable")
    ys = y[order]

    # Run boundaries of tied y values: runs[k] = [starts[k], starts[k+1]).
    change = np.flatnonzero(ys[1:] != ys[:-1]) + 1
    starts = np.concatenate(([0], change, [n]))

    q, r = divmod(n, n_slices)
    sizes = np.full(n_slices, q)
    sizes[:r] += 1
    ideal = np.cumsum(sizes)[:-1]

    # Which run interior does each ideal cut fall into?
    cuts = []
    run_of_cut = np.searchsorted(starts, ideal, side="right") - 1
    # Count cuts per run to detect runs that must be split.
    cut_counts = np.zeros(starts.size - 1, dtype=int)
    for c, k in zip(ideal, run_of_cut):
        s, e = starts[k], starts[k + 1]
        if s < c < e:
            cut_counts[k] += 1
    for c, k in zip(ideal, run_of_cut):
        s, e = starts[k], starts[k + 1]
        if s < c < e and cut_counts[k] == 1:
            # Move the whole tie group to the slice holding its majority.
            cuts.append(e if c - s >= e - c else s)
        else:
            cuts.append(int(c))

    boundaries = np.concatenate(([0], cuts, [n]))
    final_sizes = np.diff(boundaries)
    if (final_sizes <= 0).any():
        raise TooManySlices(
            f"cannot form {n_slices} non-empty slices from this response; "
            "tied values leave at least one slice empty"
        )

    labels = np.empty(n, dtype=int)
    for h in range(n_slices):
        labels[order[boundaries[h]:boundaries[h + 1]]] = h
    return SliceAssignment(n_slices=n_slices, labels=labels, counts=final_sizes)


def intraslice_moments(sd: StandardizedData, sa: SliceAssignment) -> SliceMoments:
    """Per-slice means and second moments of the standardized predictors."""
    if sd.n != sa.n:
        raise ValueError("standardized data and slice assignment disagree on n")
    p, H = sd.p, sa.n_slices
    zbar = np.empty((H, p))
    zzbar = np.empty((H, p, p))
    for h in range(H):
        zh = sd.z[sa.labels == h]
        zbar[h] = zh.mean(axis=0)
        zzbar[h] = zh.T @ zh / zh.shape[0]
    return SliceMoments(zbar=zbar, zzbar=zzbar, f_hat=sa.f_hat, counts=sa.counts.copy())


def load_dataset_csv(
    path,
    response: str,
    predictors: list[str] | None = None,
    transforms: dict[str, float] | None = None,
) -> Dataset:
    """Read a dataset from a headed CSV file with strict cell parsing.

    Any cell that does not parse as a float raises ``DataFileError`` with
    its row and column; nothing is imputed. ``transforms`` maps predictor
    names to power exponents applied before standardization.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFileError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise DataFileError(f"{path}: response column {response!r} not found")
        if predictors is None:
            predictors = [h for h in header if h != response]
        missing = [c for c in predictors if c not in header]
        if missing:
            raise DataFileError(f"{path}: predictor column(s) not found: {missing}")
        col_idx = {name: header.index(name) for name in header}

        rows = []
        yvals = []
        for i, row in enumerate(reader, start=2):  # header is line 1
            if len(row) != len(header):
                raise DataFileError(
                    f"{path}: row {i} has {len(row)} cells, expected {len(header)}"
                )
            parsed = []
            for name in predictors + [response]:
                cell = row[col_idx[name]].strip()
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataFileError(
                        f"{path}: row {i}, column {name!r}: cannot parse {cell!r}"
                    ) from None
            rows.append(parsed[:-1])
            yvals.append(parsed[-1])

    if not rows:
        raise DataFileError(f"{path}: no data rows")
    x = np.asarray(rows, dtype=float)
    y = np.asarray(yvals, dtype=float)

    if transforms:
        unknown = [c for c in transforms if c not in predictors]
        if unknown:
            raise DataFileError(f"transform refers to unknown column(s): {unknown}")
        for name, exponent in transforms.items():
            if not np.isfinite(exponent) or exponent <= 0:
                raise DataFileError(
                    f"transform exponent for {name!r} must be finite and > 0"
                )
            j = predictors.index(name)
            x[:, j] = np.power(x[:, j], exponent)
        if not np.isfinite(x).all():
            raise NonFiniteInput(
                "power transform produced non-finite values "
                "(negative base with fractional exponent?)"
            )

    return Dataset(x=x, y=y, column_names=tuple(predictors))


def write_dataset_csv(data: Dataset, path, response: str = "y") -> None:
    """Write a dataset to CSV with full float precision (round-trip safe)."""
    names = list(data.column_names or [f"x{j + 1}" for j in range(data.p)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [response])
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in data.x[i]] + [repr(float(data.y[i]))])
