"""Scikit-learn compatible estimators wrapping the sliced reducers.

Each estimator fits a candidate matrix on (X, y), keeps its spectrum, and
transforms new predictors by projecting the centered rows onto the fitted
directions in the original predictor scale. They follow the usual
fit/transform/get_params contract, so they compose with pipelines, grid
search, and the rest of the scikit-learn ecosystem.

Example
-------
>>> est = SlicedInverseMomentRegression(alpha="pvalue", n_slices=10)
>>> reduced = est.fit_transform(X, y)
>>> est.dimension_, est.alpha_
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .candidates import (
    estimate_cdrs,
    phd_matrix,
    save_matrix,
    simr_matrix,
    sir_matrix,
)
from .data import Dataset, intraslice_moments, slice_by_response, standardize
from .inference import InferenceWorkspace, dimension_test_sequence
from .selection import (
    DEFAULT_ALPHA_GRID,
    select_alpha_bootstrap,
    select_alpha_pvalue_from_parts,
)
from .simulation import sir_dimension_test_sequence


class _SlicedReducerBase(BaseEstimator, TransformerMixin):
    """Shared fitting machinery for the slice-based reducers."""

    def __init__(self, n_directions=None, n_slices=10):
        self.n_directions = n_directions
        self.n_slices = n_slices

    def _validate(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, dtype=float)
        return Dataset(x=X, y=y)

    def _fit_candidate(self, sm, sd, data, sa):
        raise NotImplementedError

    def _infer_dimension(self, sm, sd, data, sa):
        raise NotImplementedError

    def fit(self, X, y):
        data = self._validate(X, y)
        sd = standardize(data)
        sa = slice_by_response(data.y, self.n_slices)
        sm = intraslice_moments(sd, sa)
        cm = self._fit_candidate(sm, sd, data, sa)

        if self.n_directions is None:
            d = self._infer_dimension(sm, sd, data, sa)
        else:
            d = int(self.n_directions)
            if not 1 <= d <= data.p:
                raise ValueError(f"n_directions must lie in 1..p, got {d}")
        d_basis = max(d, 1)  # keep a usable projection even when d-hat is 0
        cdrs = estimate_cdrs(cm, d_basis, sd)

        self.n_features_in_ = data.p
        self.mean_ = sd.mu_hat
        self.covariance_ = sd.sigma_hat
        self.eigenvalues_ = cm.eigenvalues
        self.eigenvectors_ = cm.eigenvectors
        self.dimension_ = d
        self.directions_ = cdrs.in_x_scale
        self.basis_z_ = cdrs.basis
        return self

    def transform(self, X):
        check_is_fitted(self, "directions_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return (X - self.mean_) @ self.directions_


class SlicedInverseMomentRegression(_SlicedReducerBase):
    """Dimension reduction mixing slice means and second-moment deviations.

    Parameters
    ----------
    alpha : float, "pvalue", or "bootstrap", default=0.6
        Mixing weight between the slice-mean component (alpha) and the
        second-moment component (1 - alpha). The string values select
        alpha from ``alpha_grid`` by the corresponding criterion.
    n_directions : int or None, default=None
        Number of directions to keep. None infers the dimension from the
        weighted chi-squared marginal tests at ``level``.
    n_slices : int, default=10
        Number of response slices.
    alpha_grid : sequence of float, optional
        Grid searched by the selection criteria.
    level : float, default=0.05
        Test level for dimension inference.
    boot_reps : int, default=100
        Bootstrap resamples for the bootstrap criterion.
    random_state : int, default=0
        Seed for the bootstrap criterion.

    Attributes
    ----------
    alpha_ : float
        The mixing weight actually used.
    dimension_ : int
        Inferred (or requested) dimension.
    directions_ : ndarray of shape (p, max(dimension_, 1))
        Projection directions in the original predictor scale.
    test_results_ : list
        Marginal test results at ``alpha_`` when the tests were run.
    selection_report_ : AlphaSelectionReport
        Present when alpha was selected by a criterion.
    """

    def __init__(
        self,
        alpha=0.6,
        n_directions=None,
        n_slices=10,
        alpha_grid=None,
        level=0.05,
        boot_reps=100,
        random_state=0,
    ):
        super().__init__(n_directions=n_directions, n_slices=n_slices)
        self.alpha = alpha
        self.alpha_grid = alpha_grid
        self.level = level
        self.boot_reps = boot_reps
        self.random_state = random_state

    def _grid(self):
        return DEFAULT_ALPHA_GRID if self.alpha_grid is None else tuple(self.alpha_grid)

    def _fit_candidate(self, sm, sd, data, sa):
        if self.alpha == "pvalue":
            ws = InferenceWorkspace.from_dataset(data, sd, sa)
            report = select_alpha_pvalue_from_parts(
                sm, ws, sd, self._grid(), self.level
            )
            self.selection_report_ = report
            self.alpha_ = report.selected_alpha
            self._workspace = ws
        elif self.alpha == "bootstrap":
            if self.n_directions is None:
                raise ValueError(
                    "alpha='bootstrap' needs n_directions (the criterion "
                    "compares bases of a fixed dimension)"
                )
            report = select_alpha_bootstrap(
                data,
                self.n_slices,
                self._grid(),
                d_fixed=int(self.n_directions),
                reps=self.boot_reps,
                seed=self.random_state,
            )
            self.selection_report_ = report
            self.alpha_ = report.selected_alpha
            self._workspace = None
        else:
            self.alpha_ = float(self.alpha)
            self._workspace = None
        return simr_matrix(sm, self.alpha_)

    def _infer_dimension(self, sm, sd, data, sa):
        ws = self._workspace or InferenceWorkspace.from_dataset(data, sd, sa)
        results, d_hat = dimension_test_sequence(sm, ws, sd, self.alpha_, self.level)
        self.test_results_ = results
        return d_hat


class SlicedInverseRegression(_SlicedReducerBase):
    """Classical slice-mean reducer with its chi-squared dimension test."""

    def __init__(self, n_directions=None, n_slices=10, level=0.05):
        super().__init__(n_directions=n_directions, n_slices=n_slices)
        self.level = level

    def _fit_candidate(self, sm, sd, data, sa):
        return sir_matrix(sm)

    def _infer_dimension(self, sm, sd, data, sa):
        results, d_hat = sir_dimension_test_sequence(sm, data.n, self.level)
        self.test_results_ = results
        return d_hat


class SlicedAverageVariance(_SlicedReducerBase):
    """Intraslice-covariance reducer; requires an explicit n_directions."""

    def __init__(self, n_directions=None, n_slices=10):
        super().__init__(n_directions=n_directions, n_slices=n_slices)

    def _fit_candidate(self, sm, sd, data, sa):
        return save_matrix(sm)

    def _infer_dimension(self, sm, sd, data, sa):
        raise ValueError(
            "SlicedAverageVariance has no dimension test here; set n_directions"
        )


class PrincipalHessianDirections(BaseEstimator, TransformerMixin):
    """Response- or residual-weighted second-moment reducer (no slicing)."""

    def __init__(self, n_directions=1, mode="residual"):
        self.n_directions = n_directions
        self.mode = mode

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, dtype=float)
        data = Dataset(x=X, y=y)
        sd = standardize(data)
        cm = phd_matrix(sd, data.y, mode=self.mode)
        d = int(self.n_directions)
        if not 1 <= d <= data.p:
            raise ValueError(f"n_directions must lie in 1..p, got {d}")
        cdrs = estimate_cdrs(cm, d, sd)
        self.n_features_in_ = data.p
        self.mean_ = sd.mu_hat
        self.eigenvalues_ = cm.eigenvalues
        self.eigenvectors_ = cm.eigenvectors
        self.dimension_ = d
        self.directions_ = cdrs.in_x_scale
        return self

    def transform(self, X):
        check_is_fitted(self, "directions_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return (X - self.mean_) @ self.directions_


# The second-moment-only reducer is SIMR with alpha = 0; exposed for
# completeness of the candidate family.
def second_moment_reducer(n_directions=None, n_slices=10, level=0.05):
    return SlicedInverseMomentRegression(
        alpha=0.0, n_directions=n_directions, n_slices=n_slices, level=level
    )
