import numpy as np
import pytest
from conftest import oracle_horizon, random_state as make_state

from seqdesign.covariates import StaticCovariateModel
from seqdesign.criteria import candidate_objective
from seqdesign.model import build_row
from seqdesign.nonmyopic import (EvalCounter, NonmyopicConfig, RowCache,
                                 allocate_nonmyopic, expect_over_response,
                                 horizon_objective, optimal_future_treatment)


def _rows(state):
    return [build_row(state.Z[k], state.t[k], state.spec)
            for k in range(state.n_allocated)]


class TestHorizonZero:
    def test_identical_to_myopic_candidate(self, spec, prior, criterion):
        cov = StaticCovariateModel([0.5])
        for seed in range(5):
            state = make_state(np.random.default_rng(seed), spec, prior,
                               n_subjects=8)
            cfg = NonmyopicConfig(horizon=0, covariate_model=cov)
            for t in (1.0, -1.0):
                psi = horizon_objective(state, [1.0], t, 0, cfg, criterion=criterion)
                ref = candidate_objective(state, [1.0], t, state.beta(), criterion)
                assert psi == ref  # bitwise, both go through the same leaf math


class TestHorizonRecursionOracle:
    @pytest.mark.parametrize("N", [1, 2])
    @pytest.mark.parametrize("p_plus", [0.5, 0.3])
    def test_matches_flat_enumeration(self, spec, prior, criterion, N, p_plus):
        cov = StaticCovariateModel([p_plus])
        cfg = NonmyopicConfig(horizon=N, covariate_model=cov)
        for seed in range(4):
            state = make_state(np.random.default_rng(seed), spec, prior,
                               n_subjects=8)
            beta = state.beta()
            i = state.n_allocated + 1
            for z_i in ([1.0], [-1.0]):
                for t_i in (1.0, -1.0):
                    got = horizon_objective(state, z_i, t_i, N, cfg,
                                            criterion=criterion)
                    want = oracle_horizon(_rows(state), z_i, t_i, N, i, cov,
                                          beta, spec, criterion)
                    assert got == pytest.approx(want, rel=1e-10)

    def test_matches_flat_enumeration_depth_three(self, spec, prior, criterion):
        cov = StaticCovariateModel([0.4])
        cfg = NonmyopicConfig(horizon=3, covariate_model=cov)
        state = make_state(np.random.default_rng(6), spec, prior, n_subjects=8)
        got = horizon_objective(state, [1.0], 1.0, 3, cfg, criterion=criterion)
        want = oracle_horizon(_rows(state), [1.0], 1.0, 3, state.n_allocated + 1,
                              cov, state.beta(), spec, criterion)
        assert got == pytest.approx(want, rel=1e-10)


class TestLeafCount:
    @pytest.mark.parametrize("N", [0, 1, 2, 3])
    def test_four_to_the_n_leaves(self, spec, prior, criterion, N):
        cov = StaticCovariateModel([0.5])
        cfg = NonmyopicConfig(horizon=N, covariate_model=cov)
        state = make_state(np.random.default_rng(1), spec, prior, n_subjects=8)
        counter = EvalCounter()
        horizon_objective(state, [1.0], 1.0, N, cfg, criterion=criterion,
                          counter=counter)
        assert counter.leaves == 4 ** N


class TestTruncation:
    def test_terminal_subject_collapses_to_myopic(self, spec, prior, criterion):
        cov = StaticCovariateModel([0.5])
        cfg = NonmyopicConfig(horizon=3, covariate_model=cov)
        state = make_state(np.random.default_rng(2), spec, prior, n_subjects=9,
                          n=10)
        psi = horizon_objective(state, [1.0], 1.0, 3, cfg, criterion=criterion)
        ref = candidate_objective(state, [1.0], 1.0, state.beta(), criterion)
        assert psi == ref

    def test_partial_truncation(self, spec, prior, criterion):
        cov = StaticCovariateModel([0.5])
        cfg = NonmyopicConfig(horizon=3, covariate_model=cov)
        state = make_state(np.random.default_rng(3), spec, prior, n_subjects=8,
                          n=10)
        # one subject remains after this one, so the depth-3 request acts as 1
        psi3 = horizon_objective(state, [1.0], 1.0, 3, cfg, criterion=criterion)
        psi1 = horizon_objective(state, [1.0], 1.0, 1, cfg, criterion=criterion)
        assert psi3 == psi1

    def test_horizon_cap_enforced(self):
        with pytest.raises(ValueError):
            NonmyopicConfig(horizon=5)
        with pytest.raises(ValueError):
            NonmyopicConfig(horizon=-1)
        NonmyopicConfig(horizon=5, max_horizon=6)


class TestOptimalFutureTreatment:
    def test_ties_break_to_minus(self, spec, criterion):
        # symmetric information at beta = 0 and z = 0-free setup gives a tie
        from seqdesign.model import build_design_matrix, information_matrix
        from conftest import factorial_design
        M = information_matrix(factorial_design(), np.zeros(3))
        cache = RowCache(spec, np.zeros(3))
        t, _ = optimal_future_treatment(M, [1.0], np.zeros(3), spec, criterion,
                                        cache)
        assert t == -1.0

    def test_picks_strict_argmin(self, spec, prior, criterion):
        from seqdesign.model import information_matrix
        for seed in range(10):
            state = make_state(np.random.default_rng(seed), spec, prior,
                               n_subjects=8)
            beta = state.beta()
            M = information_matrix(state.design_matrix(), beta)
            t, v = optimal_future_treatment(M, [1.0], beta, spec, criterion)
            vals = {tt: candidate_objective(state, [1.0], tt, beta, criterion)
                    for tt in (1.0, -1.0)}
            assert v == pytest.approx(vals[t], rel=1e-12)
            assert vals[t] <= vals[-t]


class TestExpectation:
    def test_expect_over_response_weights(self):
        assert expect_over_response(0.25, lambda y: float(y)) == 0.25
        assert expect_over_response(0.25, lambda y: 7.0) == pytest.approx(7.0)


class TestSymmetry:
    def test_symmetric_state_gives_half(self, spec, prior, criterion):
        from seqdesign.trial import TrialState
        Z = np.array([[z] for z in (-1.0, -1.0, 1.0, 1.0)] * 2)
        t = np.array([-1.0, 1.0, -1.0, 1.0] * 2)
        state = TrialState.with_initial(spec, prior, Z, t)
        for y in [0, 1, 0, 1, 1, 0, 1, 0]:
            state.record_response(y)
        cov = StaticCovariateModel([0.5])
        cfg = NonmyopicConfig(horizon=2, covariate_model=cov)
        dec = allocate_nonmyopic(state, [1.0], cfg, np.random.default_rng(0),
                                 criterion=criterion)
        assert dec.prob_plus == pytest.approx(0.5, abs=1e-9)


class TestAllocator:
    def test_records_event(self, spec, prior, criterion):
        cov = StaticCovariateModel([0.5])
        cfg = NonmyopicConfig(horizon=1, covariate_model=cov)
        state = make_state(np.random.default_rng(4), spec, prior, n_subjects=8)
        dec = allocate_nonmyopic(state, [-1.0], cfg, np.random.default_rng(1),
                                 criterion=criterion)
        assert state.n_allocated == 9
        ev = state.history[-1]
        assert (ev.psi_plus, ev.psi_minus, ev.treatment) == (
            dec.psi_plus, dec.psi_minus, dec.sampled)

    def test_empirical_default_covariate_model(self, spec, prior, criterion):
        # with covariate_model None the lookahead estimates the distribution
        # from the covariates seen so far, including the arriving subject
        cfg = NonmyopicConfig(horizon=1)
        state = make_state(np.random.default_rng(5), spec, prior, n_subjects=8)
        psi = horizon_objective(state, [1.0], 1.0, 1, cfg, criterion=criterion)
        assert np.isfinite(psi)

    def test_refit_in_tree_differs_from_frozen(self, spec, prior, criterion):
        cov = StaticCovariateModel([0.5])
        state = make_state(np.random.default_rng(7), spec, prior, n_subjects=8)
        frozen = horizon_objective(
            state, [1.0], 1.0, 2,
            NonmyopicConfig(horizon=2, covariate_model=cov), criterion=criterion)
        refit = horizon_objective(
            state, [1.0], 1.0, 2,
            NonmyopicConfig(horizon=2, covariate_model=cov, refit_in_tree=True),
            criterion=criterion)
        assert np.isfinite(frozen) and np.isfinite(refit)
        assert frozen != refit
