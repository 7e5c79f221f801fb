"""Data generators, the power/size study runner, and Monte Carlo oracles.

The bundled benchmark model has four standard normal predictors and the
response y = 2 z1 e + z2^2 + z3 with independent standard normal noise e:
its regression dimension is 3 and the true basis is span{e1, e2, e3}. The
study runner replays the marginal dimension tests over seeded replicates
and tabulates rejection rates per hypothesis row together with the mean
1 - r distance between the estimated and true bases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .candidates import mzz_matrix, sir_matrix
from .data import Dataset, intraslice_moments, slice_by_response, standardize
from .exceptions import NumericalError
from .inference import InferenceWorkspace, dimension_test_sequence
from .selection import (
    DEFAULT_ALPHA_GRID,
    select_alpha_pvalue_from_parts,
    subspace_distance,
)

SUPPORTED_STUDY_METHODS = ("simr", "sir")


@dataclass(frozen=True)
class SimModel:
    """A seeded data generator with its known dimension-reduction truth."""

    name: str
    p: int
    true_d: int
    true_cdrs: np.ndarray  # (p, true_d), orthonormal


def generate_model_a(n: int, seed) -> Dataset:
    """Benchmark model: y = 2 z1 e + z2^2 + z3, four N(0,1) predictors."""
    if n < 10:
        raise ValueError("n must be at least 10")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 4))
    eps = rng.standard_normal(n)
    y = 2.0 * z[:, 0] * eps + z[:, 1] ** 2 + z[:, 2]
    return Dataset(x=z, y=y)


def generate_null_model(n: int, p: int, seed) -> Dataset:
    """Independent response: x and y standard normal, dimension 0."""
    if n < 10:
        raise ValueError("n must be at least 10")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    return Dataset(x=x, y=y)


def model_a() -> SimModel:
    basis = np.zeros((4, 3))
    basis[0, 0] = basis[1, 1] = basis[2, 2] = 1.0
    return SimModel(name="model_a", p=4, true_d=3, true_cdrs=basis)


def null_model(p: int = 4) -> SimModel:
    return SimModel(name="null", p=p, true_d=0, true_cdrs=np.zeros((p, 0)))


def _generate(model: SimModel, n: int, seed) -> Dataset:
    if model.name == "model_a":
        return generate_model_a(n, seed)
    if model.name == "null":
        return generate_null_model(n, model.p, seed)
    raise ValueError(f"unknown model {model.name!r}")


def mc_weighted_chisq_quantile(weights, prob: float, reps: int = 200_000, seed: int = 0) -> float:
    """Empirical quantile of sum_i w_i chi2_1 from seeded draws."""
    if reps < 10_000:
        raise ValueError("reps must be at least 10000")
    if not 0.0 < prob < 1.0:
        raise ValueError("prob must lie in (0, 1)")
    w = np.asarray(weights, dtype=float).reshape(-1)
    w = w[w > 0]
    if w.size == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    chunk = max(1, 2_000_000 // w.size)
    sums = np.empty(reps)
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        sums[done:done + k] = rng.chisquare(1.0, size=(k, w.size)) @ w
        done += k
    return float(np.quantile(sums, prob))


def sir_dimension_test_sequence(sm, n: int, level: float = 0.05):
    """Classical chi-squared marginal tests for SIR (comparator).

    The statistic n * (tail eigenvalue sum of the SIR matrix) is referred
    to a chi-squared law with (p - d)(H - d - 1) degrees of freedom; when
    the degrees of freedom are not positive the hypothesis is untestable
    and treated as not rejected.
    """
    p, H = sm.p, sm.n_slices
    evals = sir_matrix(sm).eigenvalues
    results = []
    d_hat = p
    for d in range(p):
        lam = float(n * evals[d:].sum())
        df = (p - d) * (H - d - 1)
        pval = float(chi2.sf(lam, df)) if df > 0 else 1.0
        reject = bool(pval < level)
        results.append({"d": d, "lambda": lam, "df": df, "p": pval, "reject": reject})
        if not reject and d_hat == p:
            d_hat = d
    return results, d_hat


@dataclass(frozen=True)
class StudyConfig:
    """Declarative configuration of a power/size study."""

    model: str = "model_a"
    model_params: dict = field(default_factory=dict)
    methods: tuple[str, ...] = ("simr", "sir")
    n_values: tuple[int, ...] = (400,)
    slice_values: tuple[int, ...] = (5, 10)
    reps: int = 200
    level: float = 0.05
    alpha_policy: str = "pvalue"   # "pvalue" or "fixed"
    alpha: float = 0.6             # used when alpha_policy == "fixed"
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    seed: int = 0

    def __post_init__(self):
        bad = [m for m in self.methods if m not in SUPPORTED_STUDY_METHODS]
        if bad:
            raise ValueError(
                f"unsupported study method(s) {bad}: the study runs only "
                f"{list(SUPPORTED_STUDY_METHODS)} (SAVE and pHd have no "
                "dimension test in this package)"
            )
        if self.model not in ("model_a", "null"):
            raise ValueError(f"unknown model {self.model!r}; use 'model_a' or 'null'")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.alpha_policy not in ("pvalue", "fixed"):
            raise ValueError("alpha_policy must be 'pvalue' or 'fixed'")

    @classmethod
    def from_json_file(cls, path) -> "StudyConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {
            "model", "model_params", "methods", "n_values", "slice_values",
            "reps", "level", "alpha_policy", "alpha", "alpha_grid", "seed",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown study config key(s): {sorted(unknown)}")
        for key in ("methods", "n_values", "slice_values", "alpha_grid"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "model_params": self.model_params,
            "methods": list(self.methods),
            "n_values": list(self.n_values),
            "slice_values": list(self.slice_values),
            "reps": self.reps,
            "level": self.level,
            "alpha_policy": self.alpha_policy,
            "alpha": self.alpha,
            "alpha_grid": list(self.alpha_grid),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PowerTable:
    """Empirical rejection rates per hypothesis row and basis accuracy.

    ``rates[(method, n, H)]`` holds the rejection proportion of each test
    d <= 0 .. d <= p-1; ``mean_one_minus_r[(method, n, H)]`` the average
    1 - r distance between the estimated true_d-dimensional basis and the
    truth. Entries are plain counts and sums underneath, so the table is
    reproducible bit for bit from the same config.
    """

    config: StudyConfig
    p: int
    true_d: int
    rates: dict
    mean_one_minus_r: dict
    redraws: int

    def rows(self) -> list[dict]:
        out = []
        for (method, n, h), rej in sorted(self.rates.items()):
            for d, rate in enumerate(rej):
                out.append({
                    "method": method, "n": n, "slices": h,
                    "hypothesis": f"d<={d}", "rate": float(rate),
                })
            out.append({
                "method": method, "n": n, "slices": h,
                "hypothesis": "mean(1-r)",
                "rate": float(self.mean_one_minus_r[(method, n, h)]),
            })
        return out

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "p": self.p,
            "true_d": self.true_d,
            "redraws": self.redraws,
            "entries": self.rows(),
        }

    def to_csv_text(self) -> str:
        lines = ["method,n,slices,hypothesis,rate"]
        for row in self.rows():
            lines.append(
                f"{row['method']},{row['n']},{row['slices']},{row['hypothesis']},{row['rate']!r}"
            )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        """Fixed-width table: one block per n, columns method x slices."""
        cfg = self.config
        cols = [(m, h) for m in cfg.methods for h in cfg.slice_values]
        header = "hypothesis  " + "  ".join(f"{m}/H={h}".rjust(12) for m, h in cols)
        blocks = []
        for n in cfg.n_values:
            lines = [f"n={n}", header]
            for d in range(self.p):
                cells = []
                for m, h in cols:
                    cells.append(f"{self.rates[(m, n, h)][d]:.4g}".rjust(12))
                lines.append(f"d<={d}".ljust(12) + "  ".join(cells))
            cells = []
            for m, h in cols:
                cells.append(f"{self.mean_one_minus_r[(m, n, h)]:.4g}".rjust(12))
            lines.append("mean(1-r)".ljust(12) + "  ".join(cells))
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"


def _x_scale_basis(sm, inv_sqrt, matrix, d):
    evals, evecs = np.linalg.eigh(matrix)
    basis = evecs[:, ::-1][:, :d]
    q, _ = np.linalg.qr(inv_sqrt @ basis)
    return q


def run_power_study(cfg: StudyConfig) -> PowerTable:
    """Replay the marginal dimension tests over seeded replicates.

    Each replicate standardizes and slices one simulated dataset, runs the
    requested methods' sequential tests, and records per-row rejections
    plus the 1 - r distance of the estimated true_d-dimensional basis to
    the truth. Replicate seeds derive from (seed, n, H, replicate), so the
    table is independent of the grid traversal order.
    """
    if cfg.model == "model_a":
        model = model_a()
    else:
        model = null_model(**cfg.model_params)
    p, true_d = model.p, model.true_d
    rates: dict = {}
    accuracy: dict = {}
    redraws = 0

    for n in cfg.n_values:
        for h_slices in cfg.slice_values:
            reject_counts = {m: np.zeros(p) for m in cfg.methods}
            dist_sums = {m: 0.0 for m in cfg.methods}
            for rep in range(cfg.reps):
                ss = np.random.SeedSequence([cfg.seed, n, h_slices, rep])
                while True:
                    try:
                        data = _generate(model, n, ss)
                        sd = standardize(data)
                        sa = slice_by_response(data.y, h_slices)
                        sm = intraslice_moments(sd, sa)
                        break
                    except NumericalError:
                        redraws += 1
                        ss = ss.spawn(1)[0]

                ws = None
                for method in cfg.methods:
                    if method == "simr":
                        if ws is None:
                            ws = InferenceWorkspace.from_dataset(data, sd, sa)
                        if cfg.alpha_policy == "fixed":
                            alpha_used = cfg.alpha
                            results, _ = dimension_test_sequence(
                                sm, ws, sd, alpha_used, cfg.level
                            )
                            rejections = [r.reject for r in results]
                        else:
                            report = select_alpha_pvalue_from_parts(
                                sm, ws, sd, cfg.alpha_grid, cfg.level
                            )
                            alpha_used = report.selected_alpha
                            rec = next(
                                r for r in report.per_alpha if r["alpha"] == alpha_used
                            )
                            rejections = [pv < cfg.level for pv in rec["pvalues"]]
                        matrix = (
                            alpha_used * sir_matrix(sm).m
                            + (1.0 - alpha_used) * mzz_matrix(sm).m
                        )
                    else:  # sir
                        results, _ = sir_dimension_test_sequence(sm, data.n, cfg.level)
                        rejections = [r["reject"] for r in results]
                        matrix = sir_matrix(sm).m

                    reject_counts[method] += np.asarray(rejections, dtype=float)
                    if true_d >= 1:
                        basis = _x_scale_basis(sm, sd.sigma_inv_sqrt, matrix, true_d)
                        dist_sums[method] += subspace_distance(
                            basis, model.true_cdrs
                        ).value

            for m in cfg.methods:
                rates[(m, n, h_slices)] = reject_counts[m] / cfg.reps
                accuracy[(m, n, h_slices)] = (
                    dist_sums[m] / cfg.reps if true_d >= 1 else float("nan")
                )

    return PowerTable(
        config=cfg, p=p, true_d=true_d,
        rates=rates, mean_one_minus_r=accuracy, redraws=redraws,
    )
