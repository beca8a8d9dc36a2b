"""Live trial-session HTTP API with append-only event-log persistence.

Every mutation is logged as one JSON record per line (fsync on append);
replaying a session's log reconstructs its state exactly. Allocation
randomness is drawn once, logged, and never re-sampled on replay.
"""
from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Header, HTTPException

from .covariates import CovariateModel
from .criteria import Criterion, evaluate
from .model import CauchyPrior, ModelSpec
from .myopic import allocate_myopic
from .nonmyopic import NonmyopicConfig, allocate_nonmyopic
from .pseudo import PseudoConfig, allocate_pseudo
from .simharness import _covariate_model_from_dict
from .trial import AllocationEvent, SequencingError, TrialState, initial_design

__all__ = ["TrialSession", "SessionStore", "create_app", "SessionError"]


def _finite_or_none(v):
    """JSON cannot carry inf/nan; a singular design's objective goes out as null."""
    return float(v) if v is not None and np.isfinite(v) else None


class SessionError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _validate_config(cfg: dict) -> dict:
    problems = []
    for fname in ("n", "n0"):
        if fname not in cfg:
            problems.append(f"missing required field: {fname}")
    if problems:
        raise SessionError(422, "invalid_config", "; ".join(problems))
    n, n0 = int(cfg["n"]), int(cfg["n0"])
    if not 1 <= n0 < n:
        problems.append("n0 must satisfy 1 <= n0 < n")
    s = int(cfg.get("s", 1))
    if s < 1:
        problems.append("s must be at least 1")
    policy = dict(cfg.get("policy", {"kind": "myopic"}))
    if policy.get("kind", "myopic") not in ("myopic", "nonmyopic", "pseudo"):
        problems.append(f"unknown policy kind {policy.get('kind')!r}")
    if policy.get("kind") in ("nonmyopic", "pseudo"):
        if policy.get("dist", "empirical") == "correct" and "covariates" not in cfg:
            problems.append("policy dist 'correct' requires a covariates model")
    if problems:
        raise SessionError(422, "invalid_config", "; ".join(problems))
    prior = dict(cfg.get("prior", {}))
    return {
        "n": n, "n0": n0, "s": s, "policy": policy,
        "seed": int(cfg.get("seed", 0)),
        "covariates": cfg.get("covariates"),
        "prior": {"intercept_scale": float(prior.get("intercept_scale", 10.0)),
                  "scale": float(prior.get("scale", 2.5))},
    }


class TrialSession:
    """One live trial: config, replayable event log, derived state."""

    def __init__(self, session_id: str, config: dict, log_path: Path):
        self.id = session_id
        self.config = config
        self.log_path = log_path
        self.lock = threading.Lock()
        self.seq = 0
        self.events: list[dict] = []
        self.phase = "collecting_initial"
        self.initial_covariates: list[list[float]] = []
        self.psi_trace: list[float] = []
        self.beta_trace: list[list[float]] = []
        self._fh = None

        self.spec = ModelSpec.main_effects(config["s"])
        self.prior = CauchyPrior.default(self.spec, config["prior"]["intercept_scale"],
                                         config["prior"]["scale"])
        self.criterion = Criterion.treatment_effect(self.spec)
        self.state = TrialState(self.spec, self.prior, n=config["n"], n0=config["n0"])
        cov = config.get("covariates")
        self.covariate_model: CovariateModel | None = (
            _covariate_model_from_dict(cov) if cov else None)

    # -- event log --------------------------------------------------------

    def _open(self):
        if self._fh is None:
            self._fh = open(self.log_path, "a")
        return self._fh

    def append_event(self, kind: str, payload: dict) -> dict:
        self.seq += 1
        event = {"seq": self.seq, "timestamp": time.time(), "kind": kind,
                 "payload": payload}
        fh = self._open()
        fh.write(json.dumps(event) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
        self.events.append(event)
        return event

    @classmethod
    def replay(cls, session_id: str, log_path: Path) -> "TrialSession":
        with open(log_path) as fh:
            events = [json.loads(line) for line in fh if line.strip()]
        if not events or events[0]["kind"] != "created":
            raise SessionError(500, "corrupt_log", f"log for {session_id} has no creation event")
        session = cls(session_id, events[0]["payload"], log_path)
        session.events = events
        session.seq = events[-1]["seq"]
        for ev in events[1:]:
            session._apply(ev["kind"], ev["payload"])
        return session

    def _apply(self, kind: str, payload: dict) -> None:
        """Apply a logged event to the derived state (no re-sampling)."""
        if kind == "subject":
            if self.phase == "collecting_initial":
                self.initial_covariates.append(list(payload["covariates"]))
            else:
                self.state.record_subject(payload["covariates"])
        elif kind == "initial_design":
            t0 = payload["treatments"]
            self.state = TrialState.with_initial(
                self.spec, self.prior, np.asarray(self.initial_covariates),
                np.asarray(t0, float), n=self.config["n"], n0=self.config["n0"])
        elif kind == "allocation":
            event = AllocationEvent(
                subject_index=payload["index"], psi_plus=payload["psi_plus"],
                psi_minus=payload["psi_minus"], prob_plus=payload["prob_plus"],
                treatment=payload["treatment"], uniform_draw=payload["u"])
            self.state.assign_treatment(payload["treatment"], event)
        elif kind == "response":
            self.state.record_response(int(payload["y"]))
            self._after_response()
        else:
            raise SessionError(500, "corrupt_log", f"unknown event kind {kind!r}")

    def _after_response(self) -> None:
        n, n0 = self.config["n"], self.config["n0"]
        if self.state.n_responded >= n0:
            self.psi_trace.append(evaluate(self.state.design_matrix(),
                                           self.state.beta(), self.criterion))
            self.beta_trace.append([float(b) for b in self.state.beta()])
        if self.phase == "collecting_initial" and self.state.n_responded == n0:
            self.phase = "active"
        if self.state.n_responded == n:
            self.phase = "complete"

    # -- operations -------------------------------------------------------

    def _allocation_rng(self, subject_index: int) -> np.random.Generator:
        # Per-subject streams keep draws independent of restart timing.
        return np.random.default_rng([self.config["seed"], subject_index])

    def enroll_subject(self, covariates) -> dict:
        n, n0 = self.config["n"], self.config["n0"]
        if self.phase == "complete":
            raise SessionError(409, "trial_complete", "trial already complete")
        z = [float(c) for c in np.atleast_1d(np.asarray(covariates, dtype=float))]
        if len(z) != self.config["s"] or any(c not in (-1.0, 1.0) for c in z):
            raise SessionError(422, "invalid_covariates",
                               f"covariates must be {{-1,1}}^{self.config['s']}")
        if self.phase == "collecting_initial":
            if len(self.initial_covariates) >= n0 or self.state.n_allocated:
                raise SessionError(409, "sequencing_error",
                                   "initial subjects already enrolled; record responses")
            index = len(self.initial_covariates) + 1
            self.append_event("subject", {"index": index, "covariates": z})
            self.initial_covariates.append(z)
            if index < n0:
                return {"subject_index": index, "treatment": None,
                        "allocation_probability": None, "status": "buffered"}
            rng = self._allocation_rng(0)
            t0 = initial_design(np.asarray(self.initial_covariates), self.spec,
                                self.criterion, rng=rng)
            t0 = [float(v) for v in t0]
            self.append_event("initial_design", {"treatments": t0})
            self.state = TrialState.with_initial(
                self.spec, self.prior, np.asarray(self.initial_covariates),
                np.asarray(t0), n=n, n0=n0)
            return {"subject_index": index, "treatment": t0[-1],
                    "allocation_probability": None, "status": "initial_design",
                    "initial_treatments": t0}

        # active phase
        if self.state.n_allocated >= n:
            raise SessionError(409, "trial_full", "all subjects already enrolled")
        if self.state.n_responded != self.state.n_allocated:
            raise SessionError(409, "sequencing_error",
                               "previous subject's response not yet recorded")
        index = self.state.n_allocated + 1
        self.append_event("subject", {"index": index, "covariates": z})
        self.state.record_subject(z)
        rng = self._allocation_rng(index)
        decision = self._allocate(z, rng)
        self.append_event("allocation", {
            "index": index, "psi_plus": decision.psi_plus,
            "psi_minus": decision.psi_minus, "prob_plus": decision.prob_plus,
            "u": decision.uniform_draw, "treatment": decision.sampled})
        return {"subject_index": index, "treatment": decision.sampled,
                "allocation_probability": (decision.prob_plus if decision.sampled > 0
                                           else 1.0 - decision.prob_plus),
                "prob_plus": decision.prob_plus, "status": "allocated"}

    def _allocate(self, z, rng):
        policy = self.config["policy"]
        kind = policy.get("kind", "myopic")
        # record_subject already done by caller; allocators expect to do it
        # themselves, so undo the pending mark first.
        self.state.pending_covariates = None
        if kind == "myopic":
            return allocate_myopic(self.state, z, rng, criterion=self.criterion)
        model = None
        if policy.get("dist", "empirical") == "correct":
            model = self.covariate_model
        if kind == "nonmyopic":
            cfg = NonmyopicConfig(horizon=int(policy.get("horizon", 1)),
                                  covariate_model=model)
            return allocate_nonmyopic(self.state, z, cfg, rng, criterion=self.criterion)
        cfg = PseudoConfig(n_trajectories=int(policy.get("trajectories", 10)),
                           covariate_model=model)
        return allocate_pseudo(self.state, z, cfg, rng, criterion=self.criterion)

    def record_response(self, subject_index: int, y: int) -> dict:
        if y not in (0, 1):
            raise SessionError(422, "invalid_response", "response must be 0 or 1")
        if self.phase == "collecting_initial" and self.state.n_allocated == 0:
            raise SessionError(409, "sequencing_error",
                               "initial design not yet constructed")
        expected = self.state.n_responded + 1
        if subject_index > self.state.n_allocated:
            raise SessionError(404, "unknown_subject",
                               f"subject {subject_index} not enrolled")
        if subject_index < expected:
            raise SessionError(409, "duplicate_response",
                               f"subject {subject_index} already has a response")
        if subject_index > expected:
            raise SessionError(409, "sequencing_error",
                               f"subject {expected} must respond first")
        self.state.record_response(int(y))
        self.append_event("response", {"index": subject_index, "y": int(y)})
        self._after_response()
        psi = (self.psi_trace[-1] if self.psi_trace else None)
        return {"subject_index": subject_index, "phase": self.phase,
                "beta_hat": [float(b) for b in self.state.beta()],
                "psi_current": _finite_or_none(psi)}

    def snapshot(self) -> dict:
        counts: dict[str, int] = {}
        for z, t in zip(self.state.Z, self.state.t):
            key = f"z={'+1' if z[0] > 0 else '-1'},t={'+1' if t > 0 else '-1'}"
            counts[key] = counts.get(key, 0) + 1
        est = self.state.beta_hat
        return {
            "id": self.id,
            "phase": self.phase,
            "n": self.config["n"],
            "n0": self.config["n0"],
            "n_enrolled": (len(self.initial_covariates)
                           if self.phase == "collecting_initial" and not self.state.n_allocated
                           else self.state.n_allocated),
            "n_responded": self.state.n_responded,
            "beta_hat": None if est is None else [float(b) for b in est.beta],
            "converged": None if est is None else bool(est.converged),
            "psi_trace": [_finite_or_none(v) for v in self.psi_trace],
            "beta_trace": [list(b) for b in self.beta_trace],
            "trace_sample_sizes": list(range(self.config["n0"],
                                             self.config["n0"] + len(self.psi_trace))),
            "history": [
                {"subject_index": ev.subject_index,
                 "psi_plus": _finite_or_none(ev.psi_plus),
                 "psi_minus": _finite_or_none(ev.psi_minus),
                 "prob_plus": ev.prob_plus, "treatment": ev.treatment}
                for ev in self.state.history],
            "treatments": list(self.state.t),
            "covariates": [list(z) for z in self.state.Z],
            "responses": list(self.state.y),
            "cell_counts": counts,
        }


class SessionStore:
    """File-backed registry of trial sessions; one event log per session."""

    def __init__(self, state_dir):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.sessions: dict[str, TrialSession] = {}
        for path in sorted(self.state_dir.glob("*.jsonl")):
            sid = path.stem
            self.sessions[sid] = TrialSession.replay(sid, path)

    def create(self, config: dict, session_id: str | None = None) -> TrialSession:
        cfg = _validate_config(config)
        with self.lock:
            sid = session_id or uuid.uuid4().hex[:12]
            if sid in self.sessions or (self.state_dir / f"{sid}.jsonl").exists():
                raise SessionError(409, "conflict", f"trial {sid!r} already exists")
            session = TrialSession(sid, cfg, self.state_dir / f"{sid}.jsonl")
            session.append_event("created", cfg)
            self.sessions[sid] = session
            return session

    def get(self, session_id: str) -> TrialSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionError(404, "not_found", f"trial {session_id!r} not found")
        return session


def create_app(state_dir, token: str | None = None) -> FastAPI:
    """Build the FastAPI app over a session store rooted at state_dir."""
    app = FastAPI(title="seqdesign trial service")
    try:
        from fastapi.middleware.cors import CORSMiddleware
        app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                           allow_headers=["*"])
    except ImportError:  # pragma: no cover
        pass
    store = SessionStore(state_dir)
    app.state.store = store

    def _auth(authorization: str | None):
        if token and authorization != f"Bearer {token}":
            raise HTTPException(status_code=401,
                                detail={"code": "unauthorized",
                                        "message": "missing or invalid token"})

    def _handle(fn):
        try:
            return fn()
        except SessionError as exc:
            raise HTTPException(status_code=exc.status,
                                detail={"code": exc.code, "message": exc.message})
        except SequencingError as exc:
            raise HTTPException(status_code=409,
                                detail={"code": "sequencing_error", "message": str(exc)})
        except ValueError as exc:
            raise HTTPException(status_code=422,
                                detail={"code": "invalid_request", "message": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/trials", status_code=201)
    def create_trial(body: dict, authorization: str | None = Header(default=None)):
        _auth(authorization)

        def go():
            session = store.create(body.get("config", body), body.get("id"))
            return {"id": session.id, "phase": session.phase,
                    "config": session.config}
        return _handle(go)

    @app.post("/trials/{session_id}/subjects")
    def enroll(session_id: str, body: dict,
               authorization: str | None = Header(default=None)):
        _auth(authorization)

        def go():
            session = store.get(session_id)
            with session.lock:
                return session.enroll_subject(body["covariates"])
        return _handle(go)

    @app.post("/trials/{session_id}/responses")
    def respond(session_id: str, body: dict,
                authorization: str | None = Header(default=None)):
        _auth(authorization)

        def go():
            session = store.get(session_id)
            with session.lock:
                return session.record_response(int(body["subject_index"]),
                                               int(body["y"]))
        return _handle(go)

    @app.get("/trials/{session_id}")
    def get_state(session_id: str, authorization: str | None = Header(default=None)):
        _auth(authorization)

        def go():
            return store.get(session_id).snapshot()
        return _handle(go)

    @app.get("/trials/{session_id}/events")
    def get_events(session_id: str, authorization: str | None = Header(default=None)):
        _auth(authorization)

        def go():
            def clean(v):
                if isinstance(v, float):
                    return _finite_or_none(v)
                if isinstance(v, dict):
                    return {k: clean(x) for k, x in v.items()}
                if isinstance(v, list):
                    return [clean(x) for x in v]
                return v
            return {"events": clean(store.get(session_id).events)}
        return _handle(go)

    return app
