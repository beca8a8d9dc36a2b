"""Acceptance gate: every primary criterion, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they
print. The two simulation studies dominate the runtime (a few minutes
serial); everything else completes in seconds.
"""
import json

import numpy as np
import pytest
import yaml
from conftest import factorial_design, oracle_horizon, oracle_objective
from conftest import random_state as make_state
from fastapi.testclient import TestClient

from seqdesign.cli import main as cli_main
from seqdesign.covariates import DynamicCovariateModel, StaticCovariateModel
from seqdesign.criteria import Criterion, candidate_objective
from seqdesign.model import (CauchyPrior, ModelSpec, build_row, fit_map,
                             penalized_log_posterior, posterior_gradient,
                             posterior_hessian)
from seqdesign.myopic import allocation_probabilities
from seqdesign.nonmyopic import NonmyopicConfig, horizon_objective
from seqdesign.pseudo import (PseudoConfig, Trajectory, allocate_pseudo,
                              greedy_rollout)
from seqdesign.service import create_app
from seqdesign.simharness import PolicySpec, StudyConfig, run_study

SPEC = ModelSpec.main_effects(1)
PRIOR = CauchyPrior.default(SPEC)
CRITERION = Criterion.treatment_effect(SPEC)


def check(name, ok, detail=""):
    line = f"[PRIMARY] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


# -- simulation studies (run once, shared by several criteria) ------------


@pytest.fixture(scope="module")
def study_one():
    policies = [PolicySpec("myopic")]
    for N in (1, 2, 3):
        for dist in ("correct", "empirical"):
            policies.append(PolicySpec("nonmyopic", horizon=N, dist=dist))
    cfg = StudyConfig(covariate_model=StaticCovariateModel((0.5,)),
                      policies=tuple(policies))
    return cfg, run_study(cfg)


@pytest.fixture(scope="module")
def study_two():
    cfg = StudyConfig(
        covariate_model=DynamicCovariateModel.linear(slope=0.01, s=1),
        policies=(PolicySpec("myopic"),
                  PolicySpec("pseudo", n_trajectories=10),
                  PolicySpec("pseudo", n_trajectories=100)))
    return cfg, run_study(cfg)


def _final_eff(result, policy, q):
    from seqdesign.simharness import final_efficiency_table
    row = next(r for r in final_efficiency_table(result)
               if r["policy"] == policy)
    return row[f"q{int(q * 100)}"]


def _median_trace(rows, policy, metric, n0, n):
    return np.array([
        np.median([r[metric] for r in rows
                   if r["policy"] == policy and r["sample_size"] == size])
        for size in range(n0, n + 1)])


# -- criteria -------------------------------------------------------------


def test_base_case_identity():
    rng = np.random.default_rng(100)
    mismatches = 0
    cfg = NonmyopicConfig(horizon=0, covariate_model=StaticCovariateModel((0.5,)))
    for k in range(1000):
        state = make_state(rng, SPEC, PRIOR, n_subjects=int(rng.integers(4, 16)))
        z = [float(rng.choice([-1.0, 1.0]))]
        t = float(rng.choice([-1.0, 1.0]))
        lhs = horizon_objective(state, z, t, 0, cfg, criterion=CRITERION)
        rhs = candidate_objective(state, z, t, state.beta(), CRITERION)
        if not (lhs == rhs or (np.isinf(lhs) and np.isinf(rhs))):
            mismatches += 1
    check("base-case identity (N=0, 1000 states, bitwise)", mismatches == 0,
          f"{mismatches} mismatches")


def test_recursion_oracle():
    rng = np.random.default_rng(101)
    worst = 0.0
    for k in range(50):
        p = float(rng.uniform(0.2, 0.8))
        cov = StaticCovariateModel((p,))
        state = make_state(rng, SPEC, PRIOR, n_subjects=int(rng.integers(6, 12)))
        beta = state.beta()
        rows = [build_row(state.Z[j], state.t[j], SPEC)
                for j in range(state.n_allocated)]
        N = [1, 2, 3][k % 3]
        z = [float(rng.choice([-1.0, 1.0]))]
        t = float(rng.choice([-1.0, 1.0]))
        cfg = NonmyopicConfig(horizon=N, covariate_model=cov)
        got = horizon_objective(state, z, t, N, cfg, criterion=CRITERION)
        want = oracle_horizon(rows, z, t, N, state.n_allocated + 1, cov, beta,
                              SPEC, CRITERION)
        worst = max(worst, abs(got - want) / abs(want))
    check("recursion oracle (N in {1,2,3}, 50 states, 1e-10)", worst <= 1e-10,
          f"worst rel err {worst:.2e}")


def test_rollout_oracle():
    rng = np.random.default_rng(102)
    worst = 0.0
    for k in range(30):
        remaining = 1 + k % 2
        state = make_state(rng, SPEC, PRIOR, n_subjects=8, n=9 + remaining)
        state.record_subject([1.0])
        beta = state.beta()
        z_future = [tuple(rng.choice([-1.0, 1.0], size=1))
                    for _ in range(remaining)]
        got = greedy_rollout(state, 1.0, Trajectory(z_future=z_future), beta,
                             CRITERION)
        # exhaustive replay with full-matrix objectives
        rows = [build_row(state.Z[j], state.t[j], SPEC)
                for j in range(state.n_allocated)]
        rows.append(build_row([1.0], 1.0, SPEC))
        for z in z_future:
            vals = {t: oracle_objective(
                np.vstack(rows + [build_row(z, t, SPEC)]), beta, CRITERION)
                for t in (-1.0, 1.0)}
            rows.append(build_row(z, -1.0 if vals[-1.0] <= vals[1.0] else 1.0,
                                  SPEC))
        want = oracle_objective(np.vstack(rows), beta, CRITERION)
        worst = max(worst, abs(got - want) / abs(want))
    ok_rollout = worst <= 1e-10

    # degenerate covariate model (always +1), one trajectory: the decision is
    # a pure function of the state and the seed, and matches a hand replay
    state = make_state(np.random.default_rng(103), SPEC, PRIOR, n_subjects=8,
                       n=11)
    cfg = PseudoConfig(n_trajectories=1,
                       covariate_model=StaticCovariateModel((1.0,)))
    probe = state.copy()
    probe.record_subject([1.0])
    beta = probe.beta()
    expected = {}
    for t_i in (1.0, -1.0):
        expected[t_i] = greedy_rollout(probe.copy(), t_i,
                                       Trajectory(z_future=[(1.0,), (1.0,)]),
                                       beta, CRITERION)
    dec1 = allocate_pseudo(state.copy(), [1.0], cfg, np.random.default_rng(5),
                           criterion=CRITERION)
    dec2 = allocate_pseudo(state.copy(), [1.0], cfg, np.random.default_rng(5),
                           criterion=CRITERION)
    p = allocation_probabilities({1: expected[1.0], -1: expected[-1.0]})
    ok_det = (dec1.psi_plus == expected[1.0]
              and dec1.psi_minus == expected[-1.0]
              and dec1.prob_plus == p
              and dec1.sampled == (1.0 if dec1.uniform_draw < p else -1.0)
              and (dec1.psi_plus, dec1.psi_minus, dec1.sampled,
                   dec1.uniform_draw)
              == (dec2.psi_plus, dec2.psi_minus, dec2.sampled,
                  dec2.uniform_draw))
    check("rollout oracle + degenerate-model determinism",
          ok_rollout and ok_det, f"worst rel err {worst:.2e}")


def test_fitting():
    rng = np.random.default_rng(104)
    worst = 0.0
    h = 1e-6
    for _ in range(50):
        n = int(rng.integers(6, 20))
        X = np.column_stack([np.ones(n), rng.choice([-1.0, 1.0], size=(n, 2))])
        y = rng.integers(0, 2, size=n)
        beta = rng.normal(0, 1, size=3)
        g = posterior_gradient(X, y, beta, PRIOR)
        H = posterior_hessian(X, y, beta, PRIOR)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd_g = (penalized_log_posterior(X, y, beta + e, PRIOR)
                    - penalized_log_posterior(X, y, beta - e, PRIOR)) / (2 * h)
            worst = max(worst, abs(fd_g - g[j]) / max(abs(g[j]), 1.0))
            fd_h = (posterior_gradient(X, y, beta + e, PRIOR)
                    - posterior_gradient(X, y, beta - e, PRIOR)) / (2 * h)
            scale = max(float(np.max(np.abs(H[:, j]))), 1.0)
            worst = max(worst, float(np.max(np.abs(fd_h - H[:, j]))) / scale)
    ok_fd = worst <= 1e-4

    # perfect separation: MAP estimates stay finite and match a
    # derivative-free optimizer on the same objective
    from scipy.optimize import minimize
    ok_sep = True
    sep_err = 0.0
    for seed in range(5):
        r = np.random.default_rng(200 + seed)
        Z = r.choice([-1.0, 1.0], size=(10, 1))
        t = r.choice([-1.0, 1.0], size=10)
        X = np.column_stack([np.ones(10), Z[:, 0], t])
        y = (t > 0).astype(int)  # separated on the treatment column
        est = fit_map(X, y, PRIOR)
        if not np.all(np.isfinite(est.beta)):
            ok_sep = False
            continue
        ref = minimize(lambda b: -penalized_log_posterior(X, y, b, PRIOR),
                       np.zeros(3), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12,
                                "maxiter": 20000})
        sep_err = max(sep_err, float(np.max(np.abs(est.beta - ref.x))))
    ok_sep = ok_sep and sep_err <= 1e-4
    check("fitting (FD derivatives 1e-4; separated-data reference 1e-4)",
          ok_fd and ok_sep, f"fd {worst:.2e}, sep {sep_err:.2e}")


def test_study_one_reproduction(study_one):
    cfg, result = study_one
    rows = result.rows()
    medians = {}
    for pol in cfg.policies:
        if pol.kind == "myopic":
            continue
        medians[pol.name] = _final_eff(result, pol.name, 0.5)
    in_window = all(0.97 <= v <= 1.05 for v in medians.values())
    monotone = all(
        bool(np.all(np.diff(_median_trace(rows, pol.name, "psi",
                                          cfg.n0, cfg.n)) <= 0))
        for pol in cfg.policies)
    detail = ", ".join(f"{k.replace('nonmyopic_', '')}={v:.4f}"
                       for k, v in medians.items())
    check("study I medians in [0.97, 1.05], psi traces decreasing",
          in_window and monotone, detail)


def test_study_two_reproduction(study_one, study_two):
    cfg1, res1 = study_one
    cfg2, res2 = study_two
    medians = {p.name: _final_eff(res2, p.name, 0.5)
               for p in cfg2.policies if p.kind != "myopic"}
    in_window = all(0.90 <= v <= 1.10 for v in medians.values())

    spread1 = max(_final_eff(res1, p.name, 0.9) - _final_eff(res1, p.name, 0.1)
                  for p in cfg1.policies if p.kind != "myopic")
    spread2 = min(_final_eff(res2, p.name, 0.9) - _final_eff(res2, p.name, 0.1)
                  for p in cfg2.policies if p.kind != "myopic")
    wider = spread2 > spread1

    rows = res2.rows()
    true = np.array(cfg2.true_beta)

    def dist_at(size):
        med = [np.median([r[k] for r in rows if r["sample_size"] == size])
               for k in ("beta_0", "beta_z", "beta_t")]
        return float(np.linalg.norm(np.array(med) - true))

    late = [dist_at(s) for s in range(40, cfg2.n + 1, 10)]
    early = [dist_at(s) for s in range(cfg2.n0, 25, 5)]
    converged = max(late) < 0.35 and np.mean(late) < np.mean(early)
    detail = (", ".join(f"{k}={v:.4f}" for k, v in medians.items())
              + f"; spreads {spread2:.4f} > {spread1:.4f}"
              + f"; max |b_hat - b| after 40: {max(late):.3f}")
    check("study II medians in [0.90, 1.10], wider spread, beta convergence",
          in_window and wider and converged, detail)


def test_allocation_rule_properties():
    rng = np.random.default_rng(105)
    ok = True
    worst = 0.0
    for _ in range(500):
        a, b = rng.gamma(1.0, 5.0, size=2)
        p = allocation_probabilities({1: a, -1: b})
        q = allocation_probabilities({1: b, -1: a})
        ok &= abs(p + q - 1.0) <= 1e-15
        c = float(rng.uniform(1e-8, 1e8))
        worst = max(worst, abs(p - allocation_probabilities({1: c * a, -1: c * b})))
    ok &= worst <= 1e-12
    ok &= allocation_probabilities({1: 2.0, -1: 2.0}) == 0.5
    ok &= allocation_probabilities({1: np.inf, -1: 1.0}) == 0.0
    ok &= allocation_probabilities({1: 1.0, -1: np.inf}) == 1.0
    ok &= allocation_probabilities({1: np.inf, -1: np.inf}) == 0.5
    check("allocation rule properties (sum, scale invariance, limits)", ok,
          f"scale drift {worst:.1e}")


def test_determinism(tmp_path):
    config = {
        "n": 14, "n0": 10, "replications": 2, "true_beta": [0.0, 1.0, 1.0],
        "covariates": {"kind": "static", "p": 0.5},
        "policies": [{"kind": "myopic"}, {"kind": "nonmyopic", "horizon": 1},
                     {"kind": "pseudo", "trajectories": 5}],
    }
    cfg_path = tmp_path / "study.yaml"
    cfg_path.write_text(yaml.safe_dump(config))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    rc1 = cli_main(["simulate", "--config", str(cfg_path), "--out", str(out1)])
    rc2 = cli_main(["simulate", "--config", str(cfg_path), "--out", str(out2)])
    same = (rc1 == rc2 == 0 and
            (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes() and
            (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes())

    # service crash-replay: fresh store over the same event logs gives an
    # identical snapshot
    state_dir = tmp_path / "svc"
    client = TestClient(create_app(state_dir))
    client.post("/trials", json={"id": "t1", "config": {"n": 8, "n0": 4,
                                                        "seed": 3}})
    for z in ([1], [1], [-1], [-1]):
        client.post("/trials/t1/subjects", json={"covariates": z})
    for i in range(1, 5):
        client.post("/trials/t1/responses", json={"subject_index": i, "y": i % 2})
    client.post("/trials/t1/subjects", json={"covariates": [1]})
    client.post("/trials/t1/responses", json={"subject_index": 5, "y": 1})
    before = client.get("/trials/t1").json()
    after = TestClient(create_app(state_dir)).get("/trials/t1").json()
    check("determinism (byte-identical study rerun; crash-replay snapshot)",
          same and after == before)
