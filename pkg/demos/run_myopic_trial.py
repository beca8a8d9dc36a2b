"""
A single sequential trial with myopic biased-coin allocation
============================================================

Subjects arrive one at a time with a binary covariate. The first ten get
treatments from a coordinate-exchange initial design at beta = 0; every
later subject is randomized by the inverse-objective biased coin.
"""
import numpy as np

from seqdesign import (CauchyPrior, Criterion, ModelSpec, build_row,
                       response_prob, run_sequential)

rng = np.random.default_rng(7)

spec = ModelSpec.main_effects(1)
prior = CauchyPrior.default(spec)
criterion = Criterion.treatment_effect(spec)

# the data-generating truth: no intercept, unit covariate and treatment effects
true_beta = np.array([0.0, 1.0, 1.0])

n, n0 = 40, 10
covariates = rng.choice([-1.0, 1.0], size=(n, 1))
deviates = rng.random(n)


def responder(i, x_row):
    # indexed deviates make the response stream reproducible
    return 1 if deviates[i - 1] < response_prob(x_row, true_beta) else 0


state = run_sequential(covariates, responder, spec, prior, criterion,
                       n0=n0, rng=rng)

print(f"final estimate: {np.round(state.beta(), 3)}  (truth {true_beta})")
print("\nallocation history (subject, z, p(+1), treatment):")
for ev, z in zip(state.history, covariates[n0:, 0]):
    print(f"  {ev.subject_index:3d}  z={z:+.0f}  p={ev.prob_plus:.3f}  "
          f"t={ev.treatment:+.0f}")

# cell counts show the design balancing within covariate strata
counts = {}
for z, t in zip(covariates[:, 0], state.t):
    counts[(z, t)] = counts.get((z, t), 0) + 1
print("\ncell counts (z, t):")
for key in sorted(counts):
    print(f"  z={key[0]:+.0f} t={key[1]:+.0f}: {counts[key]}")
