"""
Inside the lookahead: horizon trees and trajectory rollouts
===========================================================

For one decision we unpack what the nonmyopic and pseudo-nonmyopic rules
actually compute: the exact expectation over future (covariate, response)
branches, and its Monte Carlo rollout approximation.
"""
import numpy as np

from seqdesign import CauchyPrior, Criterion, ModelSpec, TrialState
from seqdesign.covariates import StaticCovariateModel
from seqdesign.myopic import allocation_probabilities
from seqdesign.nonmyopic import EvalCounter, NonmyopicConfig, horizon_objective
from seqdesign.pseudo import average_objective, generate_trajectories

rng = np.random.default_rng(3)

spec = ModelSpec.main_effects(1)
prior = CauchyPrior.default(spec)
criterion = Criterion.treatment_effect(spec)

# a small trial already under way: 8 subjects allocated and responded
Z = rng.choice([-1.0, 1.0], size=(8, 1))
t = rng.choice([-1.0, 1.0], size=8)
state = TrialState.with_initial(spec, prior, Z, t, n=20, n0=8)
for y in rng.integers(0, 2, size=8):
    state.record_response(int(y))

cov = StaticCovariateModel((0.5,))
z_new = [1.0]

# exact lookahead: the tree has 4^N leaves (two covariate values x two
# responses per future subject)
print("horizon-N expected objectives for the arriving subject:")
for N in range(4):
    cfg = NonmyopicConfig(horizon=N, covariate_model=cov)
    counter = EvalCounter()
    psi = {tt: horizon_objective(state, z_new, tt, N, cfg, criterion=criterion,
                                 counter=counter)
           for tt in (1.0, -1.0)}
    p = allocation_probabilities({1: psi[1.0], -1: psi[-1.0]})
    print(f"  N={N}: psi(+1)={psi[1.0]:.4f}  psi(-1)={psi[-1.0]:.4f}  "
          f"p(+1)={p:.4f}  leaves={counter.leaves}")

# pseudo-nonmyopic: simulate covariates to the end of the trial and complete
# each path greedily; averaging gives a cheap stand-in for the full tree
probe = state.copy()
probe.record_subject(z_new)
beta = probe.beta()
print("\ntrajectory-averaged terminal objectives (n=20, 11 future subjects):")
for M in (5, 50, 500):
    trajs = generate_trajectories(cov, 9, 20, M, np.random.default_rng(11))
    psi = {tt: average_objective(probe, tt, trajs, beta, criterion)
           for tt in (1.0, -1.0)}
    p = allocation_probabilities({1: psi[1.0], -1: psi[-1.0]})
    print(f"  M={M:3d}: psi(+1)={psi[1.0]:.4f}  psi(-1)={psi[-1.0]:.4f}  "
          f"p(+1)={p:.4f}")
