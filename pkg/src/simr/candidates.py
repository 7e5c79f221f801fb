"""Candidate-matrix estimators and basis extraction.

Each estimator produces a symmetric p x p matrix whose leading eigenvectors
estimate directions of the central dimension reduction subspace (CDRS) in
the standardized scale:

* SIR:   weighted outer products of slice means, sum_h f_h zbar_h zbar_h'
* MZZ:   average squared deviation of the intraslice second moment from the
         identity, sum_h f_h (zzbar_h - I)^2
* SAVE:  average squared deviation of the intraslice covariance from the
         identity, sum_h f_h (I - V_h)^2 with V_h = zzbar_h - zbar_h zbar_h'
* pHd:   response-weighted (or OLS-residual-weighted) average of z z'
* SIMR:  the convex combination alpha * SIR + (1 - alpha) * MZZ

SIR, MZZ, SAVE, and SIMR matrices are positive semi-definite and ordered by
descending eigenvalue; pHd matrices are indefinite and ordered by descending
absolute eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import SliceMoments, StandardizedData
from .exceptions import DegenerateSlice, RankDeficientOLS


class CandidateKind(str, Enum):
    SIR = "sir"
    MZZ = "mzz"
    SAVE = "save"
    PHD_Y = "phd-y"
    PHD_R = "phd-r"
    SIMR = "simr"


# Indefinite kinds order their spectra by |eigenvalue|.
_ABS_ORDERED = {CandidateKind.PHD_Y, CandidateKind.PHD_R}


@dataclass(frozen=True)
class CandidateMatrix:
    """Symmetric candidate matrix with its ordered eigendecomposition."""

    kind: CandidateKind
    alpha: float | None
    m: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def p(self) -> int:
        return self.m.shape[0]

    def to_json_dict(self) -> dict:
        """JSON-ready payload; eigenvector rows are the ordered vectors."""
        return {
            "kind": self.kind.value,
            "alpha": self.alpha,
            "m": self.m.tolist(),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "eigenvectors": self.eigenvectors.T.tolist(),
        }


@dataclass(frozen=True)
class CdrsEstimate:
    """Estimated CDRS basis in standardized and original predictor scales.

    ``basis`` holds the first d eigenvectors (orthonormal, z scale);
    ``in_x_scale`` is sigma_inv_sqrt @ basis with columns renormalized to
    unit length (not orthogonal in general).
    """

    d: int
    basis: np.ndarray
    in_x_scale: np.ndarray


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (deterministic)."""
    idx = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _decompose(kind: CandidateKind, m: np.ndarray, alpha: float | None = None) -> CandidateMatrix:
    msym = (m + m.T) / 2.0
    evals, evecs = np.linalg.eigh(msym)
    key = np.abs(evals) if kind in _ABS_ORDERED else evals
    order = np.argsort(-key, kind="stable")
    evals = evals[order]
    evecs = _fix_signs(evecs[:, order])
    return CandidateMatrix(kind=kind, alpha=alpha, m=msym, eigenvalues=evals, eigenvectors=evecs)


def sir_matrix(sm: SliceMoments) -> CandidateMatrix:
    """Weighted outer products of the slice means of z."""
    m = np.einsum("h,hi,hj->ij", sm.f_hat, sm.zbar, sm.zbar)
    return _decompose(CandidateKind.SIR, m)


def mzz_matrix(sm: SliceMoments) -> CandidateMatrix:
    """Weighted average of the squared deviation (zzbar_h - I)^2."""
    dev = sm.zzbar - np.eye(sm.p)
    m = np.einsum("h,hij,hjk->ik", sm.f_hat, dev, dev)
    return _decompose(CandidateKind.MZZ, m)


def save_matrix(sm: SliceMoments) -> CandidateMatrix:
    """Weighted average of (I - V_h)^2 with V_h the intraslice covariance.

    The intraslice covariance uses denominator n_h, which keeps the
    algebraic expansion in terms of the stored slice moments exact.
    Requires every slice to hold at least two observations.
    """
    if (sm.counts < 2).any():
        bad = np.flatnonzero(sm.counts < 2).tolist()
        raise DegenerateSlice(f"SAVE needs n_h >= 2 in every slice; singleton slice(s) {bad}")
    v = sm.zzbar - np.einsum("hi,hj->hij", sm.zbar, sm.zbar)
    dev = np.eye(sm.p) - v
    m = np.einsum("h,hij,hjk->ik", sm.f_hat, dev, dev)
    return _decompose(CandidateKind.SAVE, m)


def phd_matrix(sd: StandardizedData, y: np.ndarray, mode: str = "y") -> CandidateMatrix:
    """Response- or residual-weighted average of z z'.

    ``mode='y'`` weights by the centered response; ``mode='residual'``
    weights by the residual of an intercept OLS fit of y on z. The matrix
    is symmetric but generally indefinite; its spectrum is ordered by
    absolute eigenvalue.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = sd.n, sd.p
    if y.shape[0] != n:
        raise ValueError("y length must match standardized data")
    if mode == "y":
        w = y - y.mean()
        kind = CandidateKind.PHD_Y
    elif mode == "residual":
        if n <= p + 1:
            raise ValueError("residual mode needs n > p + 1")
        design = np.column_stack([np.ones(n), sd.z])
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < p + 1:
            raise RankDeficientOLS("OLS design of y on z is rank deficient")
        w = y - design @ coef
        kind = CandidateKind.PHD_R
    else:
        raise ValueError(f"mode must be 'y' or 'residual', got {mode!r}")
    m = (sd.z * w[:, None]).T @ sd.z / n
    return _decompose(kind, m)


def simr_matrix(sm: SliceMoments, alpha: float) -> CandidateMatrix:
    """Convex combination alpha * SIR + (1 - alpha) * MZZ."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    m = alpha * sir_matrix(sm).m + (1.0 - alpha) * mzz_matrix(sm).m
    return _decompose(CandidateKind.SIMR, m, alpha=float(alpha))


def estimate_cdrs(cm: CandidateMatrix, d: int, sd: StandardizedData) -> CdrsEstimate:
    """Take the first d eigenvectors as the CDRS basis and map to x scale."""
    if not 1 <= d <= cm.p:
        raise ValueError(f"d must lie in 1..p, got {d}")
    basis = cm.eigenvectors[:, :d]
    x_basis = sd.sigma_inv_sqrt @ basis
    x_basis = x_basis / np.linalg.norm(x_basis, axis=0)
    return CdrsEstimate(d=d, basis=basis, in_x_scale=x_basis)
