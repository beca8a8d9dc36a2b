"""Simulation harness: common-random-number policy comparisons, objective
traces at the true parameters, relative efficiencies, quantile summaries."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .covariates import (CovariateModel, DynamicCovariateModel, EmpiricalCovariateModel,
                         StaticCovariateModel)
from .criteria import Criterion, evaluate, relative_efficiency
from .model import CauchyPrior, ModelSpec, build_row, response_prob
from .myopic import allocate_myopic, run_sequential
from .nonmyopic import NonmyopicConfig, allocate_nonmyopic
from .pseudo import PseudoConfig, allocate_pseudo
from .trial import initial_design

__all__ = [
    "PolicySpec",
    "Seeds",
    "StudyConfig",
    "ReplicationRecord",
    "StudyResult",
    "generate_deviates",
    "respond",
    "run_replication",
    "run_study",
    "summarize",
    "final_efficiency_table",
    "write_results_csv",
    "write_summary_csv",
    "config_from_dict",
    "config_to_dict",
]

DEFAULT_QUANTILES = (0.1, 0.4, 0.5, 0.6, 0.9)


@dataclass(frozen=True)
class PolicySpec:
    """One compared allocation policy.

    kind: myopic | nonmyopic | pseudo. horizon applies to nonmyopic,
    n_trajectories to pseudo. dist "correct" uses the study's covariate
    model inside the policy; "empirical" re-estimates it from observed
    covariates at each decision.
    """

    kind: str
    horizon: int = 0
    n_trajectories: int = 0
    dist: str = "correct"

    def __post_init__(self):
        if self.kind not in ("myopic", "nonmyopic", "pseudo"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.dist not in ("correct", "empirical"):
            raise ValueError(f"unknown covariate-distribution mode {self.dist!r}")
        if self.kind == "nonmyopic" and self.horizon < 0:
            raise ValueError("nonmyopic policy requires a non-negative horizon")
        if self.kind == "pseudo" and self.n_trajectories < 1:
            raise ValueError("pseudo policy requires at least one trajectory")

    @property
    def name(self) -> str:
        if self.kind == "myopic":
            return "myopic"
        if self.kind == "nonmyopic":
            return f"nonmyopic_N{self.horizon}_{self.dist}"
        return f"pseudo_M{self.n_trajectories}_{self.dist}"


@dataclass(frozen=True)
class Seeds:
    covariates: int = 1
    deviates: int = 2
    policy: int = 3


@dataclass(frozen=True)
class StudyConfig:
    n: int = 100
    n0: int = 10
    replications: int = 20
    true_beta: tuple[float, ...] = (0.0, 1.0, 1.0)
    covariate_model: CovariateModel = field(default_factory=StaticCovariateModel)
    policies: tuple[PolicySpec, ...] = (PolicySpec("myopic"),)
    seeds: Seeds = field(default_factory=Seeds)
    intercept_prior_scale: float = 10.0
    slope_prior_scale: float = 2.5
    n_random_starts: int = 10

    def __post_init__(self):
        if not self.n0 < self.n:
            raise ValueError("n0 must be smaller than n")
        if self.replications < 1:
            raise ValueError("at least one replication is required")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ValueError("policy list contains duplicates")

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec.main_effects(self.covariate_model.s)

    @property
    def prior(self) -> CauchyPrior:
        return CauchyPrior.default(self.spec, self.intercept_prior_scale,
                                   self.slope_prior_scale)

    @property
    def criterion(self) -> Criterion:
        return Criterion.treatment_effect(self.spec)


@dataclass
class PolicyTrace:
    """Per-sample-size objective at the true parameters, estimates, history."""

    psi: np.ndarray  # length n - n0 + 1
    beta: np.ndarray  # (n - n0 + 1) x q
    treatments: np.ndarray
    error: str | None = None


@dataclass
class ReplicationRecord:
    index: int
    covariates: np.ndarray
    deviates: np.ndarray
    initial_treatments: np.ndarray
    traces: dict[str, PolicyTrace]
    efficiencies: dict[str, np.ndarray]  # vs the myopic trace, per sample size


@dataclass
class StudyResult:
    config: StudyConfig
    replications: list[ReplicationRecord]

    def rows(self) -> list[dict]:
        """Long-format rows: one per policy, replication and sample size."""
        out = []
        cfg = self.config
        beta_names = _beta_column_names(cfg.spec)
        for rec in self.replications:
            for pol in cfg.policies:
                tr = rec.traces[pol.name]
                if tr.error is not None:
                    continue
                eff = rec.efficiencies[pol.name]
                for k in range(cfg.n - cfg.n0 + 1):
                    row = {
                        "policy": pol.name,
                        "replication": rec.index,
                        "sample_size": cfg.n0 + k,
                        "psi": tr.psi[k],
                        "eff": eff[k],
                    }
                    for j, bn in enumerate(beta_names):
                        row[bn] = tr.beta[k, j]
                    out.append(row)
        return out


def _beta_column_names(spec: ModelSpec) -> list[str]:
    names = []
    for term in spec.terms:
        if term.kind == "intercept":
            names.append("beta_0")
        elif term.kind == "treatment":
            names.append("beta_t")
        elif term.kind == "covariate":
            names.append("beta_z" if term.index == 0 else f"beta_z{term.index + 1}")
        else:
            names.append("beta_zt" if term.index == 0 else f"beta_zt{term.index + 1}")
    return names


def generate_deviates(n: int, seed) -> np.ndarray:
    """Reproducible vector of n uniforms in (0,1)."""
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    # random() can return exactly 0.0; push into the open interval.
    return np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def respond(x_row, true_beta, u: float) -> int:
    """Response generation from an indexed uniform deviate: y = 1 iff u < pi."""
    return 1 if u < response_prob(x_row, true_beta) else 0


def _policy_allocator(pol: PolicySpec, cfg: StudyConfig, coin=None):
    """Allocator closure for one policy; coin is the shared per-subject
    biased-coin uniform vector (common random numbers across policies)."""
    criterion = cfg.criterion

    def u_for(st):
        return None if coin is None else float(coin[st.n_allocated])

    if pol.kind == "myopic":
        return lambda st, z, rng: allocate_myopic(st, z, rng, criterion=criterion,
                                                  uniform=u_for(st))
    model = cfg.covariate_model if pol.dist == "correct" else None
    if pol.kind == "nonmyopic":
        ncfg = NonmyopicConfig(horizon=pol.horizon, covariate_model=model)
        return lambda st, z, rng: allocate_nonmyopic(st, z, ncfg, rng,
                                                     criterion=criterion,
                                                     uniform=u_for(st))
    pcfg = PseudoConfig(n_trajectories=pol.n_trajectories, covariate_model=model)
    return lambda st, z, rng: allocate_pseudo(st, z, pcfg, rng, criterion=criterion,
                                              uniform=u_for(st))


def run_replication(config: StudyConfig, replication_index: int) -> ReplicationRecord:
    """One common-random-number comparison of every configured policy.

    The covariate realization, response deviates and initial design are shared
    across policies; the objective trace is evaluated at the true parameters.
    """
    cfg = config
    spec, prior, criterion = cfg.spec, cfg.prior, cfg.criterion
    true_beta = np.asarray(cfg.true_beta, dtype=float)

    cov_rng = np.random.default_rng([cfg.seeds.covariates, replication_index])
    Z = np.array([cfg.covariate_model.sample(i + 1, cov_rng) for i in range(cfg.n)])
    u = generate_deviates(cfg.n, [cfg.seeds.deviates, replication_index])

    init_rng = np.random.default_rng([cfg.seeds.policy, replication_index, 0])
    t0 = initial_design(Z[:cfg.n0], spec, criterion,
                        n_random_starts=cfg.n_random_starts, rng=init_rng)
    # One biased-coin uniform per subject, shared by every policy so that
    # designs only diverge where the allocation probabilities differ.
    coin = generate_deviates(cfg.n, [cfg.seeds.policy, replication_index])

    def responder(i, x_row):
        return respond(x_row, true_beta, u[i - 1])

    traces: dict[str, PolicyTrace] = {}
    for pidx, pol in enumerate(cfg.policies):
        rng = np.random.default_rng([cfg.seeds.policy, replication_index, 1 + pidx])
        psi_trace, beta_trace = [], []

        def observe(state):
            psi_trace.append(evaluate(state.design_matrix(), true_beta, criterion))
            beta_trace.append(state.beta().copy())

        try:
            final = run_sequential(Z, responder, spec, prior, criterion, cfg.n0,
                                   rng, allocator=_policy_allocator(pol, cfg, coin),
                                   initial_treatments=t0, after_response=observe)
            traces[pol.name] = PolicyTrace(psi=np.array(psi_trace),
                                           beta=np.array(beta_trace),
                                           treatments=np.array(final.t))
        except Exception as exc:  # a failing policy must not abort the replication
            traces[pol.name] = PolicyTrace(psi=np.array(psi_trace),
                                           beta=np.array(beta_trace),
                                           treatments=np.array([]),
                                           error=f"{type(exc).__name__}: {exc}")

    m = criterion.m
    eff: dict[str, np.ndarray] = {}
    myo = traces.get("myopic")
    for pol in cfg.policies:
        tr = traces[pol.name]
        if tr.error is not None or myo is None or myo.error is not None:
            eff[pol.name] = np.full(cfg.n - cfg.n0 + 1, np.nan)
            continue
        eff[pol.name] = np.array([
            relative_efficiency(myo.psi[k], tr.psi[k], m)
            if np.isfinite(myo.psi[k]) and np.isfinite(tr.psi[k])
            and myo.psi[k] > 0 and tr.psi[k] > 0 else np.nan
            for k in range(len(tr.psi))])
    return ReplicationRecord(index=replication_index, covariates=Z, deviates=u,
                             initial_treatments=np.asarray(t0, float),
                             traces=traces, efficiencies=eff)


def run_study(config: StudyConfig, jobs: int | None = None) -> StudyResult:
    """Run every replication (optionally in parallel) and collect the records."""
    indices = list(range(config.replications))
    if jobs is not None and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            recs = list(pool.map(run_replication, [config] * len(indices), indices))
    else:
        recs = [run_replication(config, i) for i in indices]
    recs.sort(key=lambda r: r.index)
    return StudyResult(config=config, replications=recs)


def summarize(rows: list[dict], quantiles=DEFAULT_QUANTILES) -> list[dict]:
    """Quantiles of psi, eff and each estimate per policy and sample size.

    Quantiles use linear interpolation of order statistics (numpy's default,
    the type-7 convention). NaNs are dropped per cell.
    """
    if not rows:
        return []
    metric_names = [k for k in rows[0]
                    if k not in ("policy", "replication", "sample_size")]
    grouped: dict[tuple, dict[str, list]] = {}
    for row in rows:
        key = (row["policy"], row["sample_size"])
        cell = grouped.setdefault(key, {m: [] for m in metric_names})
        for mname in metric_names:
            cell[mname].append(row[mname])
    out = []
    for (policy, size) in sorted(grouped, key=lambda k: (k[0], k[1])):
        for mname in metric_names:
            vals = np.array(grouped[(policy, size)][mname], dtype=float)
            vals = vals[np.isfinite(vals)]
            entry = {"policy": policy, "sample_size": size, "metric": mname}
            for q in quantiles:
                entry[f"q{int(round(q * 100))}"] = (
                    float(np.quantile(vals, q)) if len(vals) else float("nan"))
            out.append(entry)
    return out


def final_efficiency_table(result: StudyResult,
                           quantiles=DEFAULT_QUANTILES) -> list[dict]:
    """End-of-trial efficiency quantiles, one row per non-myopic policy."""
    rows = [r for r in result.rows() if r["sample_size"] == result.config.n]
    summary = summarize(rows, quantiles)
    return [
        {k: v for k, v in entry.items() if k not in ("sample_size", "metric")}
        for entry in summary
        if entry["metric"] == "eff" and entry["policy"] != "myopic"
    ]


def _format(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_results_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("no result rows to write")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for row in rows:
            w.writerow([_format(row[f]) for f in fields])


def write_summary_csv(summary: list[dict], path) -> None:
    if not summary:
        raise ValueError("no summary rows to write")
    fields = list(summary[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for row in summary:
            w.writerow([_format(row[f]) for f in fields])


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"policy", "replication", "sample_size", "psi", "eff"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ValueError(f"results file missing columns: {', '.join(missing)}")
        rows = []
        for raw in reader:
            row: dict = {"policy": raw["policy"],
                         "replication": int(raw["replication"]),
                         "sample_size": int(raw["sample_size"])}
            for k, v in raw.items():
                if k not in row:
                    row[k] = float(v)
            rows.append(row)
        return rows


# -- config (de)serialization --------------------------------------------


def _covariate_model_from_dict(d: dict) -> CovariateModel:
    kind = d.get("kind")
    if kind == "static":
        p = d.get("p", 0.5)
        p = tuple(np.atleast_1d(np.asarray(p, dtype=float)))
        return StaticCovariateModel(p_plus=p)
    if kind == "dynamic":
        return DynamicCovariateModel.linear(slope=float(d.get("slope", 0.0)),
                                            intercept=float(d.get("intercept", 0.0)),
                                            s=int(d.get("s", 1)))
    if kind == "empirical":
        counts = tuple((tuple(np.atleast_1d(np.asarray(k, float))), int(v))
                       for k, v in d.get("counts", []))
        return EmpiricalCovariateModel(counts=counts, s=int(d.get("s", 1)))
    raise ValueError(f"unknown covariate model kind {kind!r}")


def _covariate_model_to_dict(model: CovariateModel) -> dict:
    if isinstance(model, StaticCovariateModel):
        return {"kind": "static", "p": list(model.p_plus)}
    if isinstance(model, DynamicCovariateModel):
        rule = model.rule
        if hasattr(rule, "_linear_params"):
            a, b = rule._linear_params
            return {"kind": "dynamic", "slope": b, "intercept": a, "s": model.s}
        raise ValueError("only linear dynamic rules are serializable")
    if isinstance(model, EmpiricalCovariateModel):
        return {"kind": "empirical", "s": model.s,
                "counts": [[list(k), v] for k, v in model.counts]}
    raise ValueError(f"unserializable covariate model {type(model).__name__}")


def config_from_dict(d: dict) -> StudyConfig:
    """Build a StudyConfig from plain nested dicts (parsed YAML/JSON)."""
    errors = []
    for fname in ("n", "n0", "replications", "true_beta", "covariates", "policies"):
        if fname not in d:
            errors.append(f"missing required field: {fname}")
    if errors:
        raise ValueError("; ".join(errors))
    try:
        model = _covariate_model_from_dict(d["covariates"])
    except (ValueError, TypeError) as exc:
        raise ValueError(f"field covariates: {exc}") from exc
    policies = []
    for k, pd in enumerate(d["policies"]):
        try:
            policies.append(PolicySpec(
                kind=pd["kind"],
                horizon=int(pd.get("horizon", 0)),
                n_trajectories=int(pd.get("trajectories", pd.get("n_trajectories", 0))),
                dist=pd.get("dist", "correct")))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"field policies[{k}]: {exc}") from exc
    seeds_d = d.get("seeds", {})
    seeds = Seeds(covariates=int(seeds_d.get("covariates", 1)),
                  deviates=int(seeds_d.get("deviates", 2)),
                  policy=int(seeds_d.get("policy", 3)))
    prior_d = d.get("prior", {})
    try:
        return StudyConfig(
            n=int(d["n"]), n0=int(d["n0"]), replications=int(d["replications"]),
            true_beta=tuple(float(v) for v in d["true_beta"]),
            covariate_model=model, policies=tuple(policies), seeds=seeds,
            intercept_prior_scale=float(prior_d.get("intercept_scale", 10.0)),
            slope_prior_scale=float(prior_d.get("scale", 2.5)),
            n_random_starts=int(d.get("n_random_starts", 10)))
    except (ValueError, TypeError) as exc:
        raise ValueError(str(exc)) from exc


def config_to_dict(cfg: StudyConfig) -> dict:
    return {
        "n": cfg.n, "n0": cfg.n0, "replications": cfg.replications,
        "true_beta": list(cfg.true_beta),
        "covariates": _covariate_model_to_dict(cfg.covariate_model),
        "policies": [{"kind": p.kind, "horizon": p.horizon,
                      "trajectories": p.n_trajectories, "dist": p.dist}
                     for p in cfg.policies],
        "seeds": {"covariates": cfg.seeds.covariates,
                  "deviates": cfg.seeds.deviates, "policy": cfg.seeds.policy},
        "prior": {"intercept_scale": cfg.intercept_prior_scale,
                  "scale": cfg.slope_prior_scale},
        "n_random_starts": cfg.n_random_starts,
    }


def config_hash(cfg: StudyConfig) -> str:
    payload = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()
