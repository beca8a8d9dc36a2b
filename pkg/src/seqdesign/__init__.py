"""Sequential optimal-design engine for binary treatments under a logistic model."""

from .covariates import (DynamicCovariateModel, EmpiricalCovariateModel,
                         StaticCovariateModel)
from .criteria import (Criterion, candidate_objective, d_objective, da_objective,
                       relative_efficiency)
from .model import (CauchyPrior, ModelSpec, ParameterEstimate, Term, build_row,
                    fit_map, information_matrix, penalized_log_posterior,
                    response_prob)
from .myopic import AllocationDecision, allocate_myopic, allocation_probabilities, run_sequential
from .nonmyopic import NonmyopicConfig, allocate_nonmyopic, horizon_objective
from .pseudo import (PseudoConfig, allocate_pseudo, average_objective,
                     generate_trajectories, greedy_rollout)
from .simharness import (PolicySpec, Seeds, StudyConfig, run_replication, run_study,
                         summarize)
from .trial import TrialState, initial_design

__version__ = "0.1.0"
