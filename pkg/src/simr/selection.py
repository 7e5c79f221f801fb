"""Subspace distances and the two data-driven criteria for choosing alpha.

The p-value criterion runs the marginal dimension tests over an alpha grid,
groups the grid by inferred dimension, and picks the alpha whose last
rejected hypothesis was most significant. The bootstrap criterion picks the
alpha whose estimated basis is most stable across resamples, measured by
the trace-correlation distance 1 - r.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .candidates import mzz_matrix, sir_matrix
from .data import Dataset, intraslice_moments, slice_by_response, standardize
from .exceptions import DegenerateResample, NumericalError
from .inference import InferenceWorkspace, dimension_test_sequence

# Grid used throughout the package when none is given: the endpoints, a
# fine pitch near them, and a 0.1 pitch in between.
DEFAULT_ALPHA_GRID = (
    0.0, 0.01, 0.05,
    0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9,
    0.95, 0.99, 1.0,
)

# Share of the grid a dimension group must reach before it can be preferred
# over smaller dimensions in the p-value criterion.
_GROUP_SHARE = 0.25


class DistanceMetric(str, Enum):
    ONE_MINUS_R = "one_minus_r"
    ONE_MINUS_Q = "one_minus_q"
    ARCCOS_Q = "arccos_q"


@dataclass(frozen=True)
class SubspaceDistance:
    metric: DistanceMetric
    value: float


@dataclass(frozen=True)
class AlphaSelectionReport:
    """Grid, per-alpha records, and the selected alpha for one criterion.

    For the p-value criterion each record carries the inferred dimension
    and the p-value trace over the tested hypotheses; for the bootstrap
    criterion it carries the mean and spread of resample distances.
    """

    criterion: str
    alphas: tuple[float, ...]
    per_alpha: tuple[dict, ...]
    selected_alpha: float
    selected_d: int | None = None
    seed: int | None = None
    n_redrawn: int = 0
    level: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "alphas": list(self.alphas),
            "selected_alpha": self.selected_alpha,
            "selected_d": self.selected_d,
            "seed": self.seed,
            "n_redrawn": self.n_redrawn,
            "level": self.level,
            "per_alpha": list(self.per_alpha),
            **self.metadata,
        }

    def curve_rows(self) -> list[tuple[float, int, float]]:
        """Tidy (alpha, d, value) rows for plotting the criterion curve."""
        rows = []
        for rec in self.per_alpha:
            if "pvalues" in rec:
                for d, p in enumerate(rec["pvalues"]):
                    rows.append((rec["alpha"], d, p))
            else:
                rows.append((rec["alpha"], rec["d_fixed"], rec["mean_distance"]))
        return rows


def _check_orthonormal(basis: np.ndarray, name: str) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array of basis columns")
    gram = basis.T @ basis
    if not np.allclose(gram, np.eye(basis.shape[1]), atol=1e-8):
        raise ValueError(f"{name} columns must be orthonormal")
    return basis


def principal_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosines of the principal angles between two orthonormal spans."""
    a = _check_orthonormal(a, "a")
    b = _check_orthonormal(b, "b")
    return np.clip(np.linalg.svd(a.T @ b, compute_uv=False), 0.0, 1.0)


def subspace_distance(
    a: np.ndarray,
    b: np.ndarray,
    metric: DistanceMetric = DistanceMetric.ONE_MINUS_R,
) -> SubspaceDistance:
    """Distance between the spans of two orthonormal bases.

    1 - r uses the trace correlation r = sqrt(trace(Pa Pb) / max(d1, d2)),
    which is comparable across dimensions; q is the product of the cosines
    of the principal angles (over the smaller dimension), so the q metrics
    measure alignment of the smaller span inside the larger one.
    """
    metric = DistanceMetric(metric)
    cosines = principal_cosines(a, b)
    if metric is DistanceMetric.ONE_MINUS_R:
        dmax = max(a.shape[1], b.shape[1])
        value = 1.0 - float(np.sqrt(np.sum(cosines**2) / dmax))
    elif metric is DistanceMetric.ONE_MINUS_Q:
        value = 1.0 - float(np.prod(cosines))
    else:
        value = float(np.arccos(np.clip(np.prod(cosines), 0.0, 1.0)))
    # Clamp tiny negative values from rounding.
    return SubspaceDistance(metric=metric, value=max(value, 0.0))


def _dedupe(alphas) -> tuple[float, ...]:
    seen: list[float] = []
    for a in alphas:
        a = float(a)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha grid entries must lie in [0, 1], got {a}")
        if a not in seen:
            seen.append(a)
    if not seen:
        raise ValueError("alpha grid must be non-empty")
    return tuple(seen)


def select_alpha_pvalue_from_parts(
    sm,
    ws: InferenceWorkspace,
    sd,
    alphas=DEFAULT_ALPHA_GRID,
    level: float = 0.05,
) -> AlphaSelectionReport:
    """P-value criterion on precomputed moments and covariance workspace.

    Runs the test sequence for every grid alpha (sharing the workspace),
    groups alphas by their inferred dimension d, keeps the largest d
    attained by at least a quarter of the grid (falling back to the most
    frequent d), and inside that group picks the alpha whose last rejected
    hypothesis d <= d-1 has the smallest p-value. Grids reporting d = 0
    are scored by the p-value of the d <= 0 test instead.
    """
    alphas = _dedupe(alphas)
    records = []
    for a in alphas:
        results, d_hat = dimension_test_sequence(sm, ws, sd, a, level)
        records.append({
            "alpha": a,
            "d_hat": d_hat,
            "pvalues": [r.p_satterthwaite for r in results],
            "lambdas": [r.lambda_stat for r in results],
        })

    groups: dict[int, list[int]] = {}
    for i, rec in enumerate(records):
        groups.setdefault(rec["d_hat"], []).append(i)

    eligible = [d for d, idxs in groups.items() if len(idxs) >= _GROUP_SHARE * len(alphas)]
    if eligible:
        d_sel = max(eligible)
    else:
        best_count = max(len(v) for v in groups.values())
        d_sel = max(d for d, v in groups.items() if len(v) == best_count)

    def score(i: int) -> float:
        pv = records[i]["pvalues"]
        return pv[d_sel - 1] if d_sel >= 1 else pv[0]

    chosen = min(groups[d_sel], key=lambda i: (score(i), i))
    return AlphaSelectionReport(
        criterion="pvalue",
        alphas=alphas,
        per_alpha=tuple(records),
        selected_alpha=alphas[chosen],
        selected_d=d_sel,
        level=level,
    )


def select_alpha_pvalue(
    data: Dataset,
    n_slices: int,
    alphas=DEFAULT_ALPHA_GRID,
    level: float = 0.05,
) -> AlphaSelectionReport:
    """Pick alpha by the significance of its marginal dimension tests."""
    sd = standardize(data)
    sa = slice_by_response(data.y, n_slices)
    sm = intraslice_moments(sd, sa)
    ws = InferenceWorkspace.from_dataset(data, sd, sa)
    return select_alpha_pvalue_from_parts(sm, ws, sd, alphas, level)


def _fitted_x_basis(sm, inv_sqrt: np.ndarray, alpha: float, d: int) -> np.ndarray:
    """Orthonormal x-scale basis of the top-d SIMR directions."""
    m = alpha * sir_matrix(sm).m + (1.0 - alpha) * mzz_matrix(sm).m
    evals, evecs = np.linalg.eigh(m)
    basis = evecs[:, ::-1][:, :d]
    q, _ = np.linalg.qr(inv_sqrt @ basis)
    return q


def select_alpha_bootstrap(
    data: Dataset,
    n_slices: int,
    alphas=DEFAULT_ALPHA_GRID,
    d_fixed: int = 1,
    reps: int = 100,
    seed: int = 0,
    aggregate: str = "mean",
) -> AlphaSelectionReport:
    """Pick alpha by the resampling stability of its estimated basis.

    For each alpha the d_fixed-dimensional basis is estimated on the full
    sample and on ``reps`` bootstrap resamples; the score is the mean (or
    median) 1 - r distance between resample and full-sample bases, and the
    alpha with the smallest score wins. Resamples with singular covariance
    or unusable slicing are redrawn and counted. Low variability does not
    by itself certify an accurate basis (a rank-deficient candidate can be
    very stable), so the report keeps the whole score curve.
    """
    alphas = _dedupe(alphas)
    if d_fixed < 1:
        raise ValueError("d_fixed must be at least 1")
    if reps < 50:
        raise ValueError("reps must be at least 50")
    if aggregate not in ("mean", "median"):
        raise ValueError("aggregate must be 'mean' or 'median'")

    sd = standardize(data)
    sa = slice_by_response(data.y, n_slices)
    sm = intraslice_moments(sd, sa)
    full_bases = {a: _fitted_x_basis(sm, sd.sigma_inv_sqrt, a, d_fixed) for a in alphas}

    n = data.n
    master = np.random.SeedSequence(seed)
    distances = {a: np.empty(reps) for a in alphas}
    redrawn = 0
    for b in range(reps):
        while True:
            child = master.spawn(1)[0]
            rng = np.random.default_rng(child)
            idx = rng.integers(0, n, size=n)
            try:
                data_b = Dataset(x=data.x[idx], y=data.y[idx])
                sd_b = standardize(data_b)
                sa_b = slice_by_response(data_b.y, n_slices)
                sm_b = intraslice_moments(sd_b, sa_b)
                break
            except NumericalError as exc:
                redrawn += 1
                if redrawn > 50 * reps:
                    raise DegenerateResample(
                        "bootstrap resampling keeps producing degenerate samples"
                    ) from exc
        for a in alphas:
            basis_b = _fitted_x_basis(sm_b, sd_b.sigma_inv_sqrt, a, d_fixed)
            distances[a][b] = subspace_distance(basis_b, full_bases[a]).value

    agg = np.mean if aggregate == "mean" else np.median
    records = []
    for a in alphas:
        d = distances[a]
        records.append({
            "alpha": a,
            "d_fixed": d_fixed,
            "mean_distance": float(np.mean(d)),
            "median_distance": float(np.median(d)),
            "std_distance": float(np.std(d)),
        })
    scores = [float(agg(distances[a])) for a in alphas]
    chosen = int(np.argmin(scores))
    return AlphaSelectionReport(
        criterion="bootstrap",
        alphas=alphas,
        per_alpha=tuple(records),
        selected_alpha=alphas[chosen],
        selected_d=None,
        seed=seed,
        n_redrawn=redrawn,
        metadata={"d_fixed": d_fixed, "reps": reps, "aggregate": aggregate},
    )
