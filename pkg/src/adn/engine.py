"""Synchronous master-worker round engine and the baseline methods.

Each round runs the four protocol stages: (1) every worker solves its local
subproblem from snapshots frozen at round start, (2) workers send their block
image plus three scalars, (3) the master aggregates, evaluates objective and
model remotely (it never sees any alpha block), decides acceptance and the
next sigma, (4) the decision is broadcast and workers apply it.  All
cross-boundary data passes through the serialized wire format so byte counts
are honest; the transport is an in-process bus with workers run either
serially or on a thread pool, with identical results either way.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import kernels
from .control import TrustConfig, compute_rho, decide_round
from .errors import ConfigError, NonFiniteValue
from .messages import (MasterToWorker, ProbeReply, ProbeRequest,
                       WorkerToMaster, deserialize_message, serialize_message)
from .objectives import f_eval, f_grad, f_hess_diag, g_sum
from .solver import SolverBudget, certify_eta, solve_local
from .sparse import extract_block
from .surrogate import LocalSubproblem, eval_local_model

logger = logging.getLogger("adn.engine")

MODES = ("adn", "cocoa", "ls")


class StopCriteria:
    """Stop on a duality-gap target, a suboptimality target (needs a
    reference optimum value) or a round cap, whichever comes first."""

    __slots__ = ("max_rounds", "gap_tol", "subopt_tol", "reference_objective")

    def __init__(self, max_rounds, gap_tol=None, subopt_tol=None,
                 reference_objective=None):
        if max_rounds < 0:
            raise ConfigError("max_rounds must be non-negative")
        if subopt_tol is not None and reference_objective is None:
            raise ConfigError("subopt_tol needs reference_objective")
        self.max_rounds = int(max_rounds)
        self.gap_tol = gap_tol
        self.subopt_tol = subopt_tol
        self.reference_objective = reference_objective

    def reached(self, gap, objective):
        if self.gap_tol is not None and gap <= self.gap_tol:
            return "gap_tol"
        if (self.subopt_tol is not None
                and objective - self.reference_objective <= self.subopt_tol):
            return "subopt_tol"
        return None


class LineSearchConfig:
    """Backtracking parameters for the fixed-model baseline."""

    __slots__ = ("c1", "backtrack", "max_backtracks")

    def __init__(self, c1=1e-4, backtrack=0.5, max_backtracks=30):
        if not (0 < c1 < 1 and 0 < backtrack < 1 and max_backtracks >= 0):
            raise ConfigError("invalid line-search configuration")
        self.c1 = float(c1)
        self.backtrack = float(backtrack)
        self.max_backtracks = int(max_backtracks)


class EngineOptions:
    """Execution knobs that do not change the iterates.

    executor "serial" multiplexes the K logical workers on one thread;
    "threads" runs them on a pool.  debug re-verifies the shared vector and
    the objective cache after accepted rounds.  eta_certify_every=N certifies
    the local accuracy on every Nth round against a reference solve with
    eta_multiplier times the budget.  round_start_hook(round_index, workers)
    is a test/telemetry hook invoked before stage 1 of every round.
    """

    __slots__ = ("executor", "debug", "record_iterates", "eta_certify_every",
                 "eta_multiplier", "round_start_hook")

    def __init__(self, executor="serial", debug=False, record_iterates=False,
                 eta_certify_every=None, eta_multiplier=100,
                 round_start_hook=None):
        if executor not in ("serial", "threads"):
            raise ConfigError(f"unknown executor {executor!r}")
        self.executor = executor
        self.debug = debug
        self.record_iterates = record_iterates
        self.eta_certify_every = eta_certify_every
        self.eta_multiplier = eta_multiplier
        self.round_start_hook = round_start_hook


class MetricsRecord:
    """Per-round telemetry row."""

    __slots__ = ("round_index", "objective", "gap", "sigma", "rho", "accepted",
                 "bytes_up", "bytes_down", "elapsed_ms")

    def __init__(self, round_index, objective, gap, sigma, rho, accepted,
                 bytes_up, bytes_down, elapsed_ms):
        self.round_index = round_index
        self.objective = objective
        self.gap = gap
        self.sigma = sigma
        self.rho = rho
        self.accepted = accepted
        self.bytes_up = bytes_up
        self.bytes_down = bytes_down
        self.elapsed_ms = elapsed_ms


class RunTotals:
    __slots__ = ("rounds", "accepted", "rejected", "bytes_up", "bytes_down")

    def __init__(self, rounds, accepted, rejected, bytes_up, bytes_down):
        self.rounds = rounds
        self.accepted = accepted
        self.rejected = rejected
        self.bytes_up = bytes_up
        self.bytes_down = bytes_down


class RunResult:
    __slots__ = ("records", "final_alpha", "final_objective", "final_gap",
                 "totals", "stop_reason", "sigma_max", "eta_certificates",
                 "trajectory", "mode")

    def __init__(self, records, final_alpha, final_objective, final_gap,
                 totals, stop_reason, sigma_max, eta_certificates, trajectory,
                 mode):
        self.records = records
        self.final_alpha = final_alpha
        self.final_objective = final_objective
        self.final_gap = final_gap
        self.totals = totals
        self.stop_reason = stop_reason
        self.sigma_max = sigma_max
        self.eta_certificates = eta_certificates
        self.trajectory = trajectory
        self.mode = mode


def _derived_seed(base, round_index, part_id):
    ss = np.random.SeedSequence((int(base), int(round_index), int(part_id)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class _Worker:
    """One logical worker: owns a column block and its alpha coordinates.

    alpha is stored full length for convenience, but the protocol only ever
    reads or writes the entries listed in members; everything else is dead
    storage (tests corrupt it to prove locality).
    """

    def __init__(self, part_id, members, block, problem, k_parts, n_total,
                 budget, curvature):
        self.part_id = part_id
        self.members = members
        self.block = block
        self.problem = problem
        self.k_parts = k_parts
        self.alpha = np.zeros(n_total)
        self.v = None
        self.budget = budget
        self.curvature = curvature  # "block_newton" or "scaled_identity"
        self.pending = None
        self.last_sub = None

    def _hess_diag(self):
        if self.curvature == "scaled_identity":
            return np.full(self.v.size, 1.0 / self.problem.tau)
        return f_hess_diag(self.problem.loss, self.v)

    def build_subproblem(self, sigma):
        loss = self.problem.loss
        return LocalSubproblem(
            self.part_id, self.members, self.block, self.v,
            f_grad(loss, self.v), self._hess_diag(), f_eval(loss, self.v),
            sigma, self.alpha[self.members], self.problem.reg, self.k_parts)

    def solve_round(self, sigma, round_index, certify=False, multiplier=100):
        sub = self.build_subproblem(sigma)
        self.last_sub = sub
        budget = SolverBudget(self.budget.epochs,
                              seed=_derived_seed(self.budget.seed, round_index,
                                                 self.part_id),
                              mode=self.budget.mode,
                              target_eta=self.budget.target_eta,
                              max_epochs=self.budget.max_epochs)
        result = solve_local(sub, budget)
        self.pending = result.delta
        model_value = eval_local_model(sub, result.delta, image=result.delta_v)
        msg = WorkerToMaster(self.part_id, result.delta_v,
                             g_sum(self.problem.reg, sub.alpha_block + result.delta),
                             model_value, sub.anchor_value() - model_value)
        eta = None
        if certify:
            eta = certify_eta(sub, result.delta, budget, multiplier)
        return serialize_message(msg), eta

    def g_sum_current(self):
        return g_sum(self.problem.reg, self.alpha[self.members])

    def g_sum_at(self, beta):
        return g_sum(self.problem.reg,
                     self.alpha[self.members] + beta * self.pending)

    def apply(self, raw_decision):
        decision = deserialize_message(raw_decision)
        if decision.accepted:
            self.alpha[self.members] += decision.step_scale * self.pending
            self.v = self.v + decision.delta_v_total
        self.pending = None

    def gap_part(self):
        """This part's share of the duality gap, from purely local state."""
        w = f_grad(self.problem.loss, self.v)
        margins = self.block.rmatvec(w)
        reg = self.problem.reg
        return float(kernels.gap_block(self.block.indptr, self.block.indices,
                                       self.block.data, margins,
                                       self.alpha[self.members],
                                       reg.kind_code, reg.p1, reg.p2))


def _check_finite(msg, round_index):
    ok = (np.isfinite(msg.g_sum_new) and np.isfinite(msg.local_model_value)
          and np.isfinite(msg.local_decrease) and np.all(np.isfinite(msg.delta_v)))
    if not ok:
        raise NonFiniteValue(
            f"non-finite worker message (round {round_index}, part {msg.part_id})")


class _Run:
    """Shared state and stages of one engine run."""

    def __init__(self, problem, matrix, partition, trust, budget, stop, mode,
                 options, ls_cfg, alpha0):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        if problem.loss.dim != matrix.n_rows:
            raise ConfigError(
                f"loss is over length {problem.loss.dim}, matrix has {matrix.n_rows} rows")
        self.problem = problem
        self.matrix = matrix
        self.ls_cfg = ls_cfg
        self.n = matrix.n_cols
        self.d = matrix.n_rows
        self.k_parts = partition.k_parts

        curvature = "scaled_identity" if mode == "cocoa" else "block_newton"
        self.workers = [
            _Worker(k, members, extract_block(matrix, members), problem,
                    self.k_parts, self.n, budget, curvature)
            for k, members in enumerate(partition.parts)
        ]
        if alpha0 is None:
            v0 = np.zeros(self.d)
        else:
            alpha0 = np.asarray(alpha0, dtype=np.float64)
            v0 = matrix.matvec(alpha0)
        for wk in self.workers:
            wk.v = v0.copy()
            if alpha0 is not None:
                wk.alpha[wk.members] = alpha0[wk.members]
        # master-side state: the shared vector, its f-value and the cached
        # objective; the alpha blocks stay on the workers
        self.v = v0.copy()
        self.f_value = f_eval(problem.loss, self.v)
        self.objective = self.f_value + sum(wk.g_sum_current() for wk in self.workers)
        self.sigma = trust.sigma_fixed if trust.schedule == "fixed" else trust.sigma0
        self.sigma_max = self.sigma
        self.pool = None

    def stage(self, fn):
        if self.pool is None:
            return [fn(wk) for wk in self.workers]
        return list(self.pool.map(fn, self.workers))

    def gap(self):
        return max(sum(self.stage(lambda wk: wk.gap_part())), 0.0)

    def assembled_alpha(self):
        alpha = np.zeros(self.n)
        for wk in self.workers:
            alpha[wk.members] = wk.alpha[wk.members]
        return alpha

    def broadcast(self, decision):
        raw = serialize_message(decision)
        self.stage(lambda wk: wk.apply(raw))
        return len(raw) * self.k_parts

    def debug_checks(self):
        alpha = self.assembled_alpha()
        exact = self.matrix.matvec(alpha)
        drift = np.linalg.norm(self.v - exact) / (1.0 + np.linalg.norm(exact))
        if drift > 1e-8:
            raise NonFiniteValue(f"shared vector drifted: {drift:.3e}")
        recomputed = (f_eval(self.problem.loss, self.v)
                      + g_sum(self.problem.reg, alpha))
        if abs(recomputed - self.objective) > 1e-8 * (1.0 + abs(recomputed)):
            raise NonFiniteValue("objective cache drifted from recomputation")


def _probe_objective(run, beta, dv_total, round_index):
    """One extra distributed objective evaluation at step scale beta."""
    raw_req = serialize_message(ProbeRequest(round_index, beta))
    req = deserialize_message(raw_req)

    def probe(wk):
        return serialize_message(ProbeReply(wk.part_id, wk.g_sum_at(req.beta)))

    raws = run.stage(probe)
    g_total = sum(deserialize_message(r).value for r in raws)
    f_val = f_eval(run.problem.loss, run.v + beta * dv_total)
    bytes_down = len(raw_req) * run.k_parts
    bytes_up = sum(len(r) for r in raws)
    return f_val + g_total, f_val, bytes_up, bytes_down


def _execute(problem, matrix, partition, trust, budget, stop, mode,
             options=None, ls_cfg=None, alpha0=None):
    options = options or EngineOptions()
    run = _Run(problem, matrix, partition, trust, budget, stop, mode, options,
               ls_cfg, alpha0)
    records = []
    eta_certificates = []
    trajectory = [run.assembled_alpha()] if options.record_iterates else None
    totals_up = 0
    totals_down = 0
    n_accepted = 0
    pool = ThreadPoolExecutor(run.k_parts) if options.executor == "threads" else None
    run.pool = pool
    try:
        gap = run.gap()
        stop_reason = stop.reached(gap, run.objective)
        t = 0
        while stop_reason is None and t < stop.max_rounds:
            t_start = time.perf_counter()
            if options.round_start_hook is not None:
                options.round_start_hook(t, run.workers)
            certify = (options.eta_certify_every is not None
                       and t % options.eta_certify_every == 0)
            results = run.stage(
                lambda wk: wk.solve_round(run.sigma, t, certify,
                                          options.eta_multiplier))
            raws = [r[0] for r in results]
            if certify:
                eta_certificates.append((t, max(r[1] for r in results)))
            msgs = [deserialize_message(raw) for raw in raws]
            bytes_up = sum(len(raw) for raw in raws)
            dv_total = np.zeros(run.d)
            model_new = 0.0
            g_new_total = 0.0
            for msg in msgs:  # ascending part id: deterministic reduction
                _check_finite(msg, t)
                dv_total += msg.delta_v
                model_new += msg.local_model_value
                g_new_total += msg.g_sum_new
            f_new = f_eval(problem.loss, run.v + dv_total)
            obj_new = f_new + g_new_total
            if not (np.isfinite(obj_new) and np.isfinite(model_new)):
                raise NonFiniteValue(f"non-finite objective or model at round {t}")

            if mode == "ls":
                decision, accept_state, probe_up, probe_down = _line_search_round(
                    run, msgs, dv_total, model_new, obj_new, f_new, t)
                bytes_up += probe_up
            else:
                probe_down = 0
                pf_terms = None
                if trust.schedule == "parameter_free":
                    grad_v = f_grad(problem.loss, run.v)
                    diag_v = f_hess_diag(problem.loss, run.v)
                    quad = sum(float(kernels.weighted_image_norm(diag_v, m.delta_v))
                               for m in msgs)
                    lin = float(np.dot(grad_v, dv_total))
                    quad_model = run.f_value + lin + 0.5 * run.sigma * quad
                    pf_terms = (f_new, run.f_value, lin, quad_model)
                decision = decide_round(run.objective, obj_new, model_new,
                                        run.sigma, trust, pf_terms)
                if mode == "cocoa":
                    # classic fixed-sigma scheme: no acceptance test
                    decision.accepted = True
                accept_state = (obj_new, f_new, dv_total, 1.0)

            if decision.accepted:
                obj_acc, f_acc, dv_acc, beta = accept_state
                m2w = MasterToWorker(True, dv_acc, decision.sigma_next, t, beta)
            else:
                m2w = MasterToWorker(False, None, decision.sigma_next, t)
            bytes_down = run.broadcast(m2w) + probe_down
            sigma_used = run.sigma
            if decision.accepted:
                run.v += dv_acc
                run.f_value = f_acc
                run.objective = obj_acc
                n_accepted += 1
                if options.debug:
                    run.debug_checks()
            run.sigma = decision.sigma_next
            run.sigma_max = max(run.sigma_max, run.sigma)
            gap = run.gap()
            elapsed_ms = (time.perf_counter() - t_start) * 1e3
            records.append(MetricsRecord(t, run.objective, gap, sigma_used,
                                         decision.rho, decision.accepted,
                                         bytes_up, bytes_down, elapsed_ms))
            totals_up += bytes_up
            totals_down += bytes_down
            if options.record_iterates:
                trajectory.append(run.assembled_alpha())
            logger.debug("round %d: obj=%.6e gap=%.3e rho=%.3f accepted=%s",
                         t, run.objective, gap, decision.rho, decision.accepted)
            t += 1
            stop_reason = stop.reached(gap, run.objective)
        if stop_reason is None:
            stop_reason = "max_rounds"
    finally:
        if pool is not None:
            pool.shutdown()
        run.pool = None
    totals = RunTotals(len(records), n_accepted, len(records) - n_accepted,
                       totals_up, totals_down)
    return RunResult(records, run.assembled_alpha(), run.objective, gap,
                     totals, stop_reason, run.sigma_max, eta_certificates,
                     trajectory, mode)


def _line_search_round(run, msgs, dv_total, model_new, obj_full, f_full, t):
    """Armijo backtracking on the fixed sigma=1 model.

    Tries beta = 1, then halves; accepts the first beta with
    O(alpha + beta delta) <= O(alpha) - c1 beta [O(alpha) - M(delta)].
    Each backtrack is one extra distributed objective evaluation.  If every
    beta fails the round is rejected.
    """
    cfg = run.ls_cfg
    model_decrease = run.objective - model_new
    rho, _ = compute_rho(run.objective, obj_full, model_new)
    probe_up = 0
    probe_down = 0
    beta = 1.0
    obj_beta, f_beta = obj_full, f_full
    for backtracks in range(cfg.max_backtracks + 1):
        if obj_beta <= run.objective - cfg.c1 * beta * model_decrease:
            decision = _LsDecision(rho, True, 1.0)
            return decision, (obj_beta, f_beta, beta * dv_total, beta), probe_up, probe_down
        if backtracks == cfg.max_backtracks:
            break
        beta *= cfg.backtrack
        obj_beta, f_beta, up, down = _probe_objective(run, beta, dv_total, t)
        probe_up += up
        probe_down += down
    return _LsDecision(rho, False, 1.0), None, probe_up, probe_down


class _LsDecision:
    __slots__ = ("rho", "accepted", "sigma_next")

    def __init__(self, rho, accepted, sigma_next):
        self.rho = rho
        self.accepted = accepted
        self.sigma_next = sigma_next


def run_adn(problem, matrix, partition, trust, budget, stop, *, options=None,
            alpha0=None):
    """Adaptive block-Newton rounds with trust-based acceptance.

    Every round re-solves the local subproblems from fresh snapshots (also
    after a rejection, with the increased sigma) and applies the aggregated
    update only when rho >= xi.
    """
    return _execute(problem, matrix, partition, trust, budget, stop, "adn",
                    options=options, alpha0=alpha0)


def run_cocoa(problem, matrix, partition, budget, stop, *, sigma_fixed=None,
              options=None, alpha0=None):
    """Fixed-sigma baseline with a scaled-identity curvature.

    The Hessian diagonal is replaced by the smoothness surrogate (1/tau) I
    and sigma stays at K (the safe choice) unless overridden; every round is
    applied without an acceptance test.
    """
    if sigma_fixed is None:
        sigma_fixed = float(partition.k_parts)
    trust = TrustConfig(sigma0=sigma_fixed, schedule="fixed",
                        sigma_fixed=sigma_fixed)
    return _execute(problem, matrix, partition, trust, budget, stop, "cocoa",
                    options=options, alpha0=alpha0)


def run_line_search(problem, matrix, partition, budget, stop, *, ls=None,
                    options=None, alpha0=None):
    """Fixed sigma=1 block-Newton model plus Armijo backtracking."""
    trust = TrustConfig(sigma0=1.0, schedule="fixed", sigma_fixed=1.0)
    return _execute(problem, matrix, partition, trust, budget, stop, "ls",
                    options=options, ls_cfg=ls or LineSearchConfig(),
                    alpha0=alpha0)


CSV_HEADER = "round,objective,gap,sigma,rho,accepted,bytes_up,bytes_down,elapsed_ms"


def _fmt(x):
    return repr(float(x))


def metrics_csv_lines(records):
    yield CSV_HEADER
    for r in records:
        yield (f"{r.round_index},{_fmt(r.objective)},{_fmt(r.gap)},"
               f"{_fmt(r.sigma)},{_fmt(r.rho)},{int(r.accepted)},"
               f"{r.bytes_up},{r.bytes_down},{_fmt(r.elapsed_ms)}")


def write_metrics_csv(records, path):
    with open(path, "w") as fh:
        for line in metrics_csv_lines(records):
            fh.write(line + "\n")


def summary_dict(result):
    return {
        "mode": result.mode,
        "rounds": result.totals.rounds,
        "accepted": result.totals.accepted,
        "rejected": result.totals.rejected,
        "bytes_up": result.totals.bytes_up,
        "bytes_down": result.totals.bytes_down,
        "final_objective": result.final_objective,
        "final_gap": result.final_gap,
        "sigma_max": result.sigma_max,
        "stop_reason": result.stop_reason,
    }


def write_summary_json(result, path):
    import json
    with open(path, "w") as fh:
        json.dump(summary_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
