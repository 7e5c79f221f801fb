import numpy as np
import pytest
from scipy.stats import chi2

import simr
from simr import (
    Dataset,
    build_uhat,
    lambda_statistic,
    montecarlo_pvalue,
    satterthwaite_pvalue,
    simr_matrix,
    sir_matrix,
)
from simr import test_dimension_sequence as run_dimension_tests
from simr.exceptions import DegenerateSlice, HypothesisOutOfRange, ShapeMismatch
from simr.inference import (
    InferenceWorkspace,
    WeightedChisqLaw,
    build_gdot,
    estimate_delta,
    estimate_delta0,
    estimate_w,
)

from conftest import moments_for, random_dataset


def law_of(*weights):
    w = np.asarray(weights, dtype=float)
    return WeightedChisqLaw(weights=w, count=w.size, raw_weights=w)


def delta0_bruteforce(data, sa):
    """Covariance of the per-observation influence rows (independent route).

    The influence of each intraslice moment is the slice-indicator-masked,
    slice-centered observation scaled by 1/f_h; the grand-mean influence is
    the centered observation. The n-denominator covariance of these rows
    reproduces every block of the plug-in estimate exactly, except the
    grand-mean corner, which uses the n-1 covariance by convention.
    """
    n, p = data.n, data.p
    f = sa.f_hat
    rows = np.zeros((n, p * p * sa.n_slices + p * sa.n_slices + p))
    for h in range(sa.n_slices):
        mask = sa.labels == h
        xh = data.x[mask]
        vh = np.einsum("ni,nj->nij", xh, xh).reshape(xh.shape[0], p * p)
        rows[mask, h * p * p:(h + 1) * p * p] = (vh - vh.mean(0)) / f[h]
        start = p * p * sa.n_slices + h * p
        rows[mask, start:start + p] = (xh - xh.mean(0)) / f[h]
    rows[:, -p:] = data.x - data.x.mean(0)
    d0 = rows.T @ rows / n
    xc = data.x - data.x.mean(0)
    d0[-p:, -p:] = xc.T @ xc / (n - 1)
    return d0


class TestBuildUhat:
    def test_alpha_one_endpoint(self):
        data = random_dataset(0, n=100, p=3)
        _, _, sm = moments_for(data, 4)
        ud = build_uhat(sm, 1.0, 0)
        assert np.abs(ud.u1).max() == 0.0
        sir_evals = np.sort(sir_matrix(sm).eigenvalues)[::-1]
        assert np.allclose(ud.singular_values**2, sir_evals, atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 0.7, 1.0])
    def test_uu_identity(self, alpha):
        data = random_dataset(1, n=120, p=4)
        _, _, sm = moments_for(data, 5)
        ud = build_uhat(sm, alpha, 1)
        m = simr_matrix(sm, alpha).m
        assert np.linalg.norm(ud.u @ ud.u.T - m) < 1e-10

    def test_toy_scalar_singular_value(self):
        from test_candidates import toy_moments

        sm = toy_moments([[-0.3], [0.3]], [[[0.5]], [[1.5]]])
        ud = build_uhat(sm, 0.5, 0)
        assert ud.singular_values[0] == pytest.approx(np.sqrt(0.17))

    def test_gamma_blocks_orthonormal_and_tail_energy(self):
        data = random_dataset(2, n=110, p=4)
        _, _, sm = moments_for(data, 5)
        ud = build_uhat(sm, 0.4, 2)
        for block in (ud.gamma11, ud.gamma12, ud.gamma21, ud.gamma22):
            gram = block.T @ block
            assert np.linalg.norm(gram - np.eye(block.shape[1])) < 1e-10
        core = ud.gamma12.T @ ud.u @ ud.gamma22
        tail = np.sum(ud.singular_values[2:] ** 2)
        assert np.linalg.norm(core) ** 2 == pytest.approx(tail, abs=1e-8)

    def test_u_concatenation(self):
        data = random_dataset(3, n=90, p=3)
        _, _, sm = moments_for(data, 4)
        ud = build_uhat(sm, 0.5, 0)
        assert np.array_equal(ud.u, np.hstack([ud.u1, ud.u2]))

    def test_hypothesis_out_of_range(self):
        data = random_dataset(3, n=90, p=3)
        _, _, sm = moments_for(data, 4)
        with pytest.raises(HypothesisOutOfRange):
            build_uhat(sm, 0.5, 4)
        with pytest.raises(HypothesisOutOfRange):
            build_uhat(sm, 0.5, -1)

    def test_boundary_tie_flagged(self):
        # a perfectly isotropic candidate matrix ties every singular value
        from test_candidates import toy_moments

        zbar = np.zeros((2, 2))
        zzbar = np.stack([1.3 * np.eye(2), 0.7 * np.eye(2)])
        sm = toy_moments(zbar, zzbar)
        ud = build_uhat(sm, 0.0, 1)
        assert ud.boundary_tie
        data = random_dataset(0, n=100, p=2)
        _, _, sm2 = moments_for(data, 4)
        assert not build_uhat(sm2, 0.5, 1).boundary_tie


class TestLambdaStatistic:
    def test_empty_tail_is_zero(self):
        data = random_dataset(4, n=90, p=3)
        _, _, sm = moments_for(data, 4)
        ud = build_uhat(sm, 0.5, 3)  # d = p
        assert lambda_statistic(ud, data.n) == 0.0

    def test_d0_equals_n_trace(self):
        data = random_dataset(4, n=90, p=3)
        _, _, sm = moments_for(data, 4)
        ud = build_uhat(sm, 0.5, 0)
        expected = data.n * np.trace(simr_matrix(sm, 0.5).m)
        assert lambda_statistic(ud, data.n) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_tail_eigen_sum(self, seed):
        data = random_dataset(seed, n=150, p=4)
        _, _, sm = moments_for(data, 6)
        evals = simr_matrix(sm, 0.35).eigenvalues
        for d in range(5):
            ud = build_uhat(sm, 0.35, d)
            lam = lambda_statistic(ud, data.n)
            expected = data.n * evals[d:].sum()
            assert lam == pytest.approx(expected, rel=1e-8, abs=1e-10)


class TestDelta0:
    @pytest.mark.parametrize("seed,n,p,H", [(0, 80, 3, 4), (1, 60, 2, 3), (2, 50, 1, 2)])
    def test_matches_influence_oracle(self, seed, n, p, H):
        data = random_dataset(seed, n=n, p=p)
        sa = simr.slice_by_response(data.y, H)
        d0 = estimate_delta0(data, sa)
        oracle = delta0_bruteforce(data, sa)
        scale = np.abs(oracle).max()
        assert np.abs(d0 - oracle).max() < 1e-8 * scale

    def test_p1_h1_structure(self):
        # one slice: the blocks are Var(x^2), Cov(x, x^2), Var(x)
        rng = np.random.default_rng(8)
        x = rng.standard_normal((40, 1)) + 0.5
        data = Dataset(x=x, y=rng.standard_normal(40))
        sa = simr.data.SliceAssignment(
            n_slices=1, labels=np.zeros(40, int), counts=np.array([40])
        )
        d0 = estimate_delta0(data, sa)
        v = x[:, 0] ** 2
        var_n = lambda a: float(np.mean((a - a.mean()) ** 2))
        assert d0[0, 0] == pytest.approx(var_n(v))
        assert d0[1, 0] == pytest.approx(float(np.mean((x[:, 0] - x.mean()) * (v - v.mean()))))
        assert d0[1, 1] == pytest.approx(var_n(x[:, 0]))
        assert d0[2, 2] == pytest.approx(float(np.var(x[:, 0], ddof=1)))

    def test_symmetric_and_psd(self):
        data = random_dataset(3, n=100, p=3)
        sa = simr.slice_by_response(data.y, 4)
        d0 = estimate_delta0(data, sa)
        assert np.array_equal(d0, d0.T)
        scale = np.abs(d0).max()
        assert np.linalg.eigvalsh(d0).min() > -1e-8 * scale

    def test_independent_slices_block_value(self):
        # x independent of the slice label: Cov(x | slice) is Cov(x)
        rng = np.random.default_rng(12)
        n = 20_000
        x = rng.standard_normal((n, 2))
        data = Dataset(x=x, y=rng.standard_normal(n))
        sa = simr.slice_by_response(data.y, 4)
        d0 = estimate_delta0(data, sa)
        p, H = 2, 4
        cov_x = np.cov(x.T, bias=True)
        for h in range(H):
            s = slice(p * p * H + h * p, p * p * H + (h + 1) * p)
            block = d0[s, s] * sa.f_hat[h]
            assert np.abs(block - cov_x).max() < 0.1

    def test_singleton_slice_raises(self):
        data = random_dataset(0, n=30, p=2)
        sa = simr.data.SliceAssignment(
            n_slices=2, labels=np.r_[np.zeros(29, int), 1], counts=np.array([29, 1])
        )
        with pytest.raises(DegenerateSlice):
            estimate_delta0(data, sa)


class TestDelta:
    def test_gdot_hand_case(self):
        g = build_gdot(np.zeros((1, 1)), np.zeros(1))
        assert np.allclose(g, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    def test_p1_h1_zero_mean_delta_is_upper_block(self):
        d0 = np.arange(9.0).reshape(3, 3)
        d0 = d0 + d0.T
        delta = estimate_delta(d0, np.zeros((1, 1)), np.zeros(1))
        assert np.allclose(delta, d0[:2, :2])

    def test_psd_congruence(self):
        data = random_dataset(5, n=90, p=3)
        sa = simr.slice_by_response(data.y, 4)
        ws = InferenceWorkspace.from_dataset(data, sa=sa)
        scale = np.abs(ws.delta).max()
        assert np.linalg.eigvalsh((ws.delta + ws.delta.T) / 2).min() > -1e-8 * scale

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            estimate_delta(np.eye(4), np.zeros((1, 1)), np.zeros(1))

    def test_factorization_blocks(self):
        # c_n is built exactly as o_n - m_n (I kron mu') - mu n_n
        data = random_dataset(6, n=80, p=2)
        ws = InferenceWorkspace.from_dataset(data, n_slices=3)
        recon = ws.o_n - ws.m_n @ np.kron(np.eye(3), ws.mu_hat[None, :])
        recon -= ws.mu_hat[:, None] @ ws.n_n
        assert np.array_equal(ws.c_n, recon)

    def test_k_matrix_structure_and_factorization(self):
        # K is block diagonal: sqrt(1-a) kron(FG, Sigma^{-1/2}) over the
        # second-moment columns and sqrt(a) FG over the mean columns; the
        # factorization Sigma^{-1/2} (C_n, M_n) K reproduces U_n up to the
        # O(1/n) gap between the n and n-1 covariance conventions
        for n in (60, 240, 960):
            data = random_dataset(11, n=n, p=2)
            sd, sa, sm = moments_for(data, 3)
            ws = InferenceWorkspace.from_dataset(data, sd, sa)
            alpha = 0.35
            k = ws.k_matrix(alpha)
            p, H = 2, 3
            upper = np.sqrt(1 - alpha) * np.kron(ws.fg, sd.sigma_inv_sqrt)
            assert np.allclose(k[:p * H, :p * H], upper)
            assert np.allclose(k[p * H:, p * H:], np.sqrt(alpha) * ws.fg)
            assert np.abs(k[:p * H, p * H:]).max() == 0.0
            assert np.abs(k[p * H:, :p * H]).max() == 0.0

            ud = build_uhat(sm, alpha, 0)
            recon = sd.sigma_inv_sqrt @ np.hstack([ws.c_n, ws.m_n]) @ k
            gap = np.linalg.norm(recon - ud.u)
            assert gap < 3.0 / n

    def test_monte_carlo_oracle(self):
        # replicate the centered moment matrix over fresh samples from a
        # two-slice population with distinct means/scales; n * cov of the
        # replicates must agree with the delta-method plug-in
        def draw(n, rng):
            lab = (rng.random(n) < 0.5).astype(int)
            x = rng.standard_normal((n, 2)) * np.where(lab[:, None] == 0, 1.0, 1.8)
            x += np.where(lab[:, None] == 0, [1.0, -0.5], [-0.6, 0.9])
            return Dataset(x=x, y=lab.astype(float))

        rng = np.random.default_rng(42)
        reps, n = 3000, 500
        vecs = np.empty((reps, 12))
        for r in range(reps):
            data = draw(n, rng)
            ws = InferenceWorkspace.from_dataset(data, n_slices=2)
            vecs[r] = np.concatenate([ws.c_n.ravel(order="F"), ws.m_n.ravel(order="F")])
        empirical = n * np.cov(vecs.T, bias=True)

        big = draw(200_000, np.random.default_rng(7))
        ws = InferenceWorkspace.from_dataset(big, n_slices=2)
        scale = np.abs(ws.delta).max()
        assert np.abs(empirical - ws.delta).max() < 0.15 * scale
        rel = np.linalg.norm(empirical - ws.delta) / np.linalg.norm(ws.delta)
        assert rel < 0.12


class TestEstimateW:
    def test_vacuous_hypothesis_empty_law(self):
        data = random_dataset(0, n=90, p=3)
        sd, sa, sm = moments_for(data, 4)
        ws = InferenceWorkspace.from_dataset(data, sd, sa)
        ud = build_uhat(sm, 0.5, 3)  # d = p
        law = estimate_w(ws.delta, ud, sd, ws)
        assert law.count == 0 and law.weights.size == 0
        assert lambda_statistic(ud, data.n) == 0.0
        assert satterthwaite_pvalue(0.0, law) == 1.0

    @pytest.mark.parametrize("d", [0, 1, 2])
    def test_psd_floor_and_count(self, d):
        data = random_dataset(1, n=140, p=3)
        sd, sa, sm = moments_for(data, 5)
        ws = InferenceWorkspace.from_dataset(data, sd, sa)
        ud = build_uhat(sm, 0.5, d)
        law = estimate_w(ws.delta, ud, sd, ws)
        p, H = 3, 5
        assert law.count == (p - d) * (p * H + H - d)
        assert law.weights.size == law.count
        assert (law.weights >= 0).all()
        assert law.raw_weights.min() > -1e-6 * max(law.raw_weights.max(), 1e-12)

    def test_weights_invariant_to_row_permutation(self):
        data = random_dataset(2, n=130, p=3)
        perm = np.random.default_rng(0).permutation(data.n)
        data_p = Dataset(x=data.x[perm], y=data.y[perm])

        def weights_of(d):
            sd, sa, sm = moments_for(d, 5)
            ws = InferenceWorkspace.from_dataset(d, sd, sa)
            ud = build_uhat(sm, 0.5, 1)
            return estimate_w(ws.delta, ud, sd, ws).weights

        w1, w2 = weights_of(data), weights_of(data_p)
        assert np.abs(w1 - w2).max() < 1e-6


class TestSatterthwaite:
    def test_equal_weights_exact(self):
        law = law_of(2.0, 2.0, 2.0, 2.0)
        stat = 9.3
        assert satterthwaite_pvalue(stat, law) == pytest.approx(chi2.sf(stat / 2.0, 4))

    def test_two_weight_case_against_oracle(self):
        # weights {2, 1} at stat 4: scale 5/3, df 1.8; the Monte Carlo
        # evaluation of the same law is the reference
        law = law_of(2.0, 1.0)
        p_satt = satterthwaite_pvalue(4.0, law)
        theta, df = 5.0 / 3.0, 1.8
        assert p_satt == pytest.approx(chi2.sf(4.0 / theta, df))
        p_mc, _ = montecarlo_pvalue(4.0, law, reps=10**6, seed=3)
        assert abs(p_satt - p_mc) < 0.02

    def test_zero_stat(self):
        assert satterthwaite_pvalue(0.0, law_of(1.0, 0.5)) == pytest.approx(1.0)

    def test_zero_weight_law(self):
        assert satterthwaite_pvalue(5.0, law_of(0.0, 0.0)) == 1.0

    def test_monotone_in_stat(self):
        law = law_of(3.0, 1.0, 0.5)
        stats = np.linspace(0, 30, 40)
        pvals = [satterthwaite_pvalue(s, law) for s in stats]
        assert (np.diff(pvals) <= 1e-15).all()


class TestMonteCarloPvalue:
    def test_single_weight_quantile(self):
        p, se = montecarlo_pvalue(3.841, law_of(1.0), reps=100_000, seed=1)
        assert abs(p - 0.05) < 3 * max(se, 1e-4) + 0.002

    def test_equal_weights_match_satterthwaite(self):
        law = law_of(1.5, 1.5, 1.5)
        stat = 6.0
        p_mc, se = montecarlo_pvalue(stat, law, reps=200_000, seed=2)
        assert abs(p_mc - satterthwaite_pvalue(stat, law)) < 3 * se + 1e-3

    def test_deterministic_under_seed(self):
        law = law_of(2.0, 1.0)
        out1 = montecarlo_pvalue(4.0, law, reps=50_000, seed=9)
        out2 = montecarlo_pvalue(4.0, law, reps=50_000, seed=9)
        assert out1 == out2

    def test_binomial_se_scaling(self):
        law = law_of(2.0, 1.0)
        p1, se1 = montecarlo_pvalue(4.0, law, reps=50_000, seed=9)
        p2, se2 = montecarlo_pvalue(4.0, law, reps=200_000, seed=9)
        # quadrupling the draws halves the binomial error envelope
        assert se2 < 0.7 * se1
        assert se1 == pytest.approx(np.sqrt(p1 * (1 - p1) / 50_000))

    def test_reps_floor(self):
        with pytest.raises(ValueError):
            montecarlo_pvalue(1.0, law_of(1.0), reps=10, seed=0)


class TestDimensionSequence:
    def test_p1_single_hypothesis(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((60, 1))
        data = Dataset(x=x, y=x[:, 0] + rng.standard_normal(60))
        results, d_hat = run_dimension_tests(data, 4, 0.5, 0.05)
        assert len(results) == 1
        assert results[0].d_tested == 0

    def test_model_a_detects_three(self, model_a_400):
        results, d_hat = run_dimension_tests(model_a_400, 10, 0.6, 0.05)
        assert d_hat == 3
        assert [r.reject for r in results] == [True, True, True, False]

    def test_null_size_calibration(self):
        # pure noise: the d<=0 test should reject at about the nominal level
        rej = 0
        reps = 500
        for rep in range(reps):
            data = simr.generate_null_model(400, 2, seed=rep)
            results, _ = run_dimension_tests(data, 4, 0.5, 0.05)
            rej += results[0].reject
        rate = rej / reps
        assert 0.02 <= rate <= 0.08

    def test_mc_pvalue_agrees_with_satterthwaite(self, model_a_400):
        results, _ = run_dimension_tests(
            model_a_400, 10, 0.6, 0.05, mc_reps=50_000, mc_seed=4
        )
        r = results[3]  # the null holds here, p is moderate
        assert abs(r.p_montecarlo - r.p_satterthwaite) < 0.05

    def test_json_dict_shape(self, model_a_400):
        results, _ = run_dimension_tests(model_a_400, 10, 0.6, 0.05)
        payload = results[0].to_json_dict()
        assert set(payload) >= {"d", "lambda", "weights", "p_satterthwaite", "reject"}
        assert len(payload["weights"]) <= 50
