"""Weighted chi-squared marginal dimension tests for the SIMR estimator.

The statistic for the null "dimension <= d" is n times the sum of the
smallest p - d eigenvalues of the SIMR candidate matrix, equivalently the
sum of the squared smallest p - d singular values of sqrt(n) U_n, where
U_n is the p x (pH + H) matrix whose columns are the scaled intraslice
second-moment deviations and slice means:

    U_n = ( sqrt(1-a) (zzbar_h - I) sqrt(f_h) ... | sqrt(a) zbar_h sqrt(f_h) ... )

Its limit law is a weighted sum of independent chi-squared(1) variables
whose weights are the eigenvalues of a covariance matrix W assembled from:

* Delta0: the asymptotic covariance of the stacked raw slice moments
  (second moments O_n, means M_n, grand mean mu_hat), built blockwise from
  intraslice covariances;
* Delta = gdot Delta0 gdot', the delta-method covariance of the centered
  moment matrix (C_n, M_n), with C_n = O_n - M_n (I kron mu') - mu N_n;
* the singular-vector blocks of U_n and the scaling K that maps the
  centered moments to U_n.

Delta0 and Delta depend only on the data and slicing, never on the mixing
weight alpha or the hypothesis d, so an ``InferenceWorkspace`` computes
them once per dataset and is shared across a whole alpha grid.

P-values come from a two-moment chi-squared (Satterthwaite) tail
approximation, with a seeded Monte Carlo evaluation of the exact limit law
available as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .data import (
    Dataset,
    SliceAssignment,
    SliceMoments,
    StandardizedData,
    intraslice_moments,
    slice_by_response,
    standardize,
)
from .exceptions import DegenerateSlice, HypothesisOutOfRange, ShapeMismatch

# Relative gap under which the singular values at the d/d+1 boundary are
# reported as tied (the SVD block split is then arbitrary).
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class UhatDecomposition:
    """U_n, its partition (u1 | u2), and the SVD blocks for hypothesis d."""

    alpha: float
    d_hypothesis: int
    u1: np.ndarray             # (p, pH)
    u2: np.ndarray             # (p, H)
    u: np.ndarray              # (p, pH + H)
    gamma11: np.ndarray        # (p, d)
    gamma12: np.ndarray        # (p, p - d)
    gamma21: np.ndarray        # (pH + H, d)
    gamma22: np.ndarray        # (pH + H, pH + H - d)
    singular_values: np.ndarray  # (p,), descending
    boundary_tie: bool

    @property
    def p(self) -> int:
        return self.u.shape[0]

    @property
    def n_slices(self) -> int:
        return self.u2.shape[1]


@dataclass(frozen=True)
class WeightedChisqLaw:
    """Limit law sum_i weights[i] * chi2_1, weights clipped at zero."""

    weights: np.ndarray      # descending, >= 0, length == count
    count: int
    raw_weights: np.ndarray  # eigenvalues of W before clipping

    @property
    def is_degenerate(self) -> bool:
        return self.weights.sum() <= 0.0


@dataclass(frozen=True)
class DimensionTestResult:
    """Outcome of one marginal test of dimension <= d_tested."""

    d_tested: int
    lambda_stat: float
    law: WeightedChisqLaw
    p_satterthwaite: float
    level: float
    reject: bool
    boundary_tie: bool
    p_montecarlo: float | None = None
    mc_std_error: float | None = None
    mc_reps: int | None = None
    mc_seed: int | None = None

    def to_json_dict(self, max_weights: int = 50) -> dict:
        w = self.law.weights
        head = w[:max_weights]
        return {
            "d": self.d_tested,
            "lambda": self.lambda_stat,
            "weights": [float(v) for v in head],
            "weights_tail_sum": float(w[max_weights:].sum()),
            "weight_count": self.law.count,
            "p_satterthwaite": self.p_satterthwaite,
            "p_mc": self.p_montecarlo,
            "mc_std_error": self.mc_std_error,
            "seed": self.mc_seed,
            "reps": self.mc_reps,
            "reject": self.reject,
            "boundary_tie": self.boundary_tie,
        }


def build_uhat(sm: SliceMoments, alpha: float, d: int) -> UhatDecomposition:
    """Assemble U_n from slice moments and split its SVD at hypothesis d.

    The left singular vectors beyond d form gamma12, the right singular
    vectors beyond d form gamma22. U_n satisfies U_n U_n' = SIMR matrix.
    """
    p, H = sm.p, sm.n_slices
    if not 0 <= d <= p:
        raise HypothesisOutOfRange(f"hypothesis d must lie in 0..p, got {d}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    sf = np.sqrt(sm.f_hat)
    blocks = np.sqrt(1.0 - alpha) * (sm.zzbar - np.eye(p)) * sf[:, None, None]
    u1 = blocks.transpose(1, 0, 2).reshape(p, H * p)
    u2 = np.sqrt(alpha) * (sm.zbar * sf[:, None]).T
    u = np.hstack([u1, u2])

    left, svals, right_t = np.linalg.svd(u, full_matrices=True)
    tie = bool(0 < d < p and svals[d - 1] - svals[d] <= _TIE_RTOL * max(svals[0], 1e-300))
    return UhatDecomposition(
        alpha=float(alpha),
        d_hypothesis=d,
        u1=u1,
        u2=u2,
        u=u,
        gamma11=left[:, :d],
        gamma12=left[:, d:],
        gamma21=right_t[:d].T,
        gamma22=right_t[d:].T,
        singular_values=svals,
        boundary_tie=tie,
    )


def lambda_statistic(ud: UhatDecomposition, n: int) -> float:
    """n times the squared singular values of U_n beyond the hypothesis d."""
    tail = ud.singular_values[ud.d_hypothesis:]
    return float(n * np.sum(tail**2))


def estimate_delta0(data: Dataset, sa: SliceAssignment) -> np.ndarray:
    """Blockwise covariance of the stacked raw moments (O_n, M_n, mu_hat).

    Coordinates are ordered as vec(O_n) (p^2 H entries, slice-major),
    vec(M_n) (pH entries), then mu_hat (p entries). Diagonal blocks hold
    the intraslice covariances divided by the slice proportion; the
    mu_hat border holds them undivided; the corner is the n-1 sample
    covariance of x. All intraslice covariances use denominator n_h.
    """
    if data.n != sa.n:
        raise ShapeMismatch("dataset and slice assignment disagree on n")
    if (sa.counts < 2).any():
        bad = np.flatnonzero(sa.counts < 2).tolist()
        raise DegenerateSlice(f"covariance estimation needs n_h >= 2; singleton slice(s) {bad}")

    n, p, H = data.n, data.p, sa.n_slices
    f = sa.f_hat
    dim_o = p * p * H
    dim_m = p * H
    dim = dim_o + dim_m + p
    delta0 = np.zeros((dim, dim))
    mu_rows = slice(dim_o + dim_m, dim)

    for h in range(H):
        xh = data.x[sa.labels == h]
        nh = xh.shape[0]
        vh = np.einsum("ni,nj->nij", xh, xh).reshape(nh, p * p)
        vbar = vh.mean(axis=0)
        xbar = xh.mean(axis=0)
        cov_vv = vh.T @ vh / nh - np.outer(vbar, vbar)
        cov_xv = xh.T @ vh / nh - np.outer(xbar, vbar)
        cov_xx = xh.T @ xh / nh - np.outer(xbar, xbar)

        so = slice(h * p * p, (h + 1) * p * p)
        sm_ = slice(dim_o + h * p, dim_o + (h + 1) * p)
        delta0[so, so] = cov_vv / f[h]
        delta0[sm_, so] = cov_xv / f[h]
        delta0[so, sm_] = cov_xv.T / f[h]
        delta0[sm_, sm_] = cov_xx / f[h]
        delta0[mu_rows, so] = cov_xv
        delta0[so, mu_rows] = cov_xv.T
        delta0[mu_rows, sm_] = cov_xx
        delta0[sm_, mu_rows] = cov_xx

    xc = data.x - data.x.mean(axis=0)
    delta0[mu_rows, mu_rows] = xc.T @ xc / (n - 1)
    return delta0


def build_gdot(m_n: np.ndarray, mu_hat: np.ndarray) -> np.ndarray:
    """Derivative of (O_n, M_n, mu_hat) -> (C_n, M_n) at the sample values.

    Row blocks: the C_n rows are [I | -I_H kron mu kron I_p - I_pH kron mu | g13]
    with g13 stacking -(I_p kron xbar_h + xbar_h kron I_p) over slices; the
    M_n rows are [0 | I | 0].
    """
    p, H = m_n.shape
    mu = np.asarray(mu_hat, dtype=float).reshape(p, 1)
    dim_o = p * p * H
    dim_m = p * H
    g = np.zeros((dim_o + dim_m, dim_o + dim_m + p))
    g[:dim_o, :dim_o] = np.eye(dim_o)
    g[:dim_o, dim_o:dim_o + dim_m] = -(
        np.kron(np.eye(H), np.kron(mu, np.eye(p))) + np.kron(np.eye(p * H), mu)
    )
    eye_p = np.eye(p)
    for h in range(H):
        xbar = m_n[:, h].reshape(p, 1)
        g[h * p * p:(h + 1) * p * p, dim_o + dim_m:] = -(
            np.kron(eye_p, xbar) + np.kron(xbar, eye_p)
        )
    g[dim_o:, dim_o:dim_o + dim_m] = np.eye(dim_m)
    return g


def estimate_delta(delta0: np.ndarray, m_n: np.ndarray, mu_hat: np.ndarray) -> np.ndarray:
    """Delta-method covariance of vec(C_n, M_n): gdot Delta0 gdot'."""
    p, H = m_n.shape
    dim = p * p * H + p * H + p
    if delta0.shape != (dim, dim):
        raise ShapeMismatch(f"delta0 must be {dim} x {dim}, got {delta0.shape}")
    g = build_gdot(m_n, mu_hat)
    return g @ delta0 @ g.T


@dataclass(frozen=True)
class InferenceWorkspace:
    """Per-dataset quantities shared by every (alpha, d) marginal test.

    Holds the raw and centered moment matrices in the original predictor
    scale, the covariance estimates Delta0 and Delta, and the pieces of the
    scaling matrix K (the slice centering F, the sqrt-proportion diagonal G,
    and the predictor whitening). Delta0 and Delta do not depend on alpha
    or on the tested dimension, so one workspace serves a whole grid.
    """

    n: int
    p: int
    n_slices: int
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    sigma_inv_sqrt: np.ndarray
    m_n: np.ndarray          # (p, H) intraslice means of x
    n_n: np.ndarray          # (1, pH) row vec(M_n)'
    o_n: np.ndarray          # (p, pH) intraslice second moments of x
    c_n: np.ndarray          # (p, pH) centered second moments
    delta0: np.ndarray
    gdot: np.ndarray
    delta: np.ndarray
    f_vec: np.ndarray        # (H,) slice proportions
    g_diag: np.ndarray       # (H,) sqrt proportions
    f_centering: np.ndarray  # (H, H) I - f 1'
    fg: np.ndarray           # (H, H) f_centering @ diag(g_diag)
    k_upper: np.ndarray      # (pH, pH) kron(fg, sigma_inv_sqrt)

    @classmethod
    def from_dataset(
        cls,
        data: Dataset,
        sd: StandardizedData | None = None,
        sa: SliceAssignment | None = None,
        n_slices: int = 10,
    ) -> "InferenceWorkspace":
        if sd is None:
            sd = standardize(data)
        if sa is None:
            sa = slice_by_response(data.y, n_slices)
        n, p, H = data.n, data.p, sa.n_slices
        m_n = np.empty((p, H))
        o_n = np.empty((p, p * H))
        for h in range(H):
            xh = data.x[sa.labels == h]
            m_n[:, h] = xh.mean(axis=0)
            o_n[:, h * p:(h + 1) * p] = xh.T @ xh / xh.shape[0]
        n_n = m_n.T.reshape(1, -1)
        mu = sd.mu_hat
        c_n = o_n - m_n @ np.kron(np.eye(H), mu[None, :]) - mu[:, None] @ n_n

        delta0 = estimate_delta0(data, sa)
        gdot = build_gdot(m_n, mu)
        delta = gdot @ delta0 @ gdot.T

        f = sa.f_hat
        g_diag = np.sqrt(f)
        f_centering = np.eye(H) - np.outer(f, np.ones(H))
        fg = f_centering * g_diag[None, :]
        k_upper = np.kron(fg, sd.sigma_inv_sqrt)
        return cls(
            n=n, p=p, n_slices=H,
            mu_hat=mu, sigma_hat=sd.sigma_hat, sigma_inv_sqrt=sd.sigma_inv_sqrt,
            m_n=m_n, n_n=n_n, o_n=o_n, c_n=c_n,
            delta0=delta0, gdot=gdot, delta=delta,
            f_vec=f, g_diag=g_diag, f_centering=f_centering, fg=fg, k_upper=k_upper,
        )

    def k_matrix(self, alpha: float) -> np.ndarray:
        """Block-diagonal K(alpha) with U_n = sigma_inv_sqrt (C_n, M_n) K."""
        p, H = self.p, self.n_slices
        k = np.zeros((p * H + H, p * H + H))
        k[:p * H, :p * H] = np.sqrt(1.0 - alpha) * self.k_upper
        k[p * H:, p * H:] = np.sqrt(alpha) * self.fg
        return k


def estimate_w(
    delta: np.ndarray,
    ud: UhatDecomposition,
    sd: StandardizedData,
    ws: InferenceWorkspace,
) -> WeightedChisqLaw:
    """Plug-in covariance of the tail block of sqrt(n) U_n and its spectrum.

    W = [(K g22)' kron (g12' Sigma^{-1/2})] Delta [same]', a square matrix
    of side (p - d)(pH + H - d). Finite-sample negative eigenvalues are
    clipped at zero; the unclipped spectrum is kept for diagnostics.
    """
    p, H, d = ud.p, ud.n_slices, ud.d_hypothesis
    if ws.p != p or ws.n_slices != H:
        raise ShapeMismatch("workspace and decomposition disagree on p or H")
    dim = p * p * H + p * H
    if delta.shape != (dim, dim):
        raise ShapeMismatch(f"delta must be {dim} x {dim}, got {delta.shape}")
    count = (p - d) * (p * H + H - d)
    if count == 0:
        empty = np.empty(0)
        return WeightedChisqLaw(weights=empty, count=0, raw_weights=empty)

    g22 = ud.gamma22
    kg22 = np.vstack([
        np.sqrt(1.0 - ud.alpha) * ws.k_upper @ g22[:p * H],
        np.sqrt(ud.alpha) * ws.fg @ g22[p * H:],
    ])
    t = np.kron(kg22.T, ud.gamma12.T @ sd.sigma_inv_sqrt)
    w = t @ delta @ t.T
    raw = np.linalg.eigvalsh((w + w.T) / 2.0)[::-1]
    return WeightedChisqLaw(weights=np.clip(raw, 0.0, None), count=count, raw_weights=raw)


def satterthwaite_pvalue(lambda_stat: float, law: WeightedChisqLaw) -> float:
    """Two-moment chi-squared tail approximation for the weighted law.

    Matches scale theta = sum(w^2)/sum(w) and fractional degrees of freedom
    df = sum(w)^2/sum(w^2); exact when all weights are equal. A law with
    zero total weight yields p = 1.
    """
    s1 = float(law.weights.sum())
    if s1 <= 0.0:
        return 1.0
    s2 = float(np.sum(law.weights**2))
    theta = s2 / s1
    df = s1 * s1 / s2
    return float(chi2.sf(lambda_stat / theta, df))


def montecarlo_pvalue(
    lambda_stat: float,
    law: WeightedChisqLaw,
    reps: int = 200_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo tail probability of the weighted chi-squared law.

    Returns the exceedance fraction over ``reps`` seeded draws together
    with its binomial standard error. Deterministic for fixed (seed, reps).
    """
    if reps < 1000:
        raise ValueError("reps must be at least 1000")
    w = law.weights[law.weights > 0]
    if w.size == 0:
        return 1.0, 0.0
    rng = np.random.default_rng(seed)
    chunk = max(1, 2_000_000 // w.size)
    exceed = 0
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        sums = rng.chisquare(1.0, size=(k, w.size)) @ w
        exceed += int((sums > lambda_stat).sum())
        done += k
    phat = exceed / reps
    se = float(np.sqrt(phat * (1.0 - phat) / reps))
    return float(phat), se


def dimension_test_sequence(
    sm: SliceMoments,
    ws: InferenceWorkspace,
    sd: StandardizedData,
    alpha: float,
    level: float = 0.05,
    mc_reps: int | None = None,
    mc_seed: int = 0,
) -> tuple[list[DimensionTestResult], int]:
    """Run the marginal tests d <= 0, 1, ..., p-1 for one alpha.

    The inferred dimension is the first d whose test fails to reject; all
    results are returned regardless. Shares one SVD of U_n across the
    hypotheses.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    p = sm.p
    n = ws.n
    results: list[DimensionTestResult] = []
    d_hat = p
    for d in range(p):
        ud = build_uhat(sm, alpha, d)
        lam = lambda_statistic(ud, n)
        law = estimate_w(ws.delta, ud, sd, ws)
        p_satt = satterthwaite_pvalue(lam, law)
        if mc_reps is not None:
            p_mc, se = montecarlo_pvalue(lam, law, reps=mc_reps, seed=mc_seed)
        else:
            p_mc, se = None, None
        reject = bool(p_satt < level)
        results.append(DimensionTestResult(
            d_tested=d,
            lambda_stat=lam,
            law=law,
            p_satterthwaite=p_satt,
            level=level,
            reject=reject,
            boundary_tie=ud.boundary_tie,
            p_montecarlo=p_mc,
            mc_std_error=se,
            mc_reps=mc_reps,
            mc_seed=mc_seed if mc_reps is not None else None,
        ))
        if not reject and d_hat == p:
            d_hat = d
    return results, d_hat


def test_dimension_sequence(
    data: Dataset,
    n_slices: int,
    alpha: float,
    level: float = 0.05,
    mc_reps: int | None = None,
    mc_seed: int = 0,
) -> tuple[list[DimensionTestResult], int]:
    """Standardize, slice, and run the full marginal test sequence."""
    sd = standardize(data)
    sa = slice_by_response(data.y, n_slices)
    sm = intraslice_moments(sd, sa)
    ws = InferenceWorkspace.from_dataset(data, sd, sa)
    return dimension_test_sequence(sm, ws, sd, alpha, level, mc_reps, mc_seed)
