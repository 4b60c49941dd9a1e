"""Saddle-point solvers for min_x f(x) + g(A x).

Four solvers share one problem object:

- run_pdhg: fixed-step primal-dual hybrid gradient with relaxation.
- run_pdhg_ls: primal-dual iteration with a backtracking search on the
  proximal step, no tuning required beyond an initial step.
- run_aoi_pddr: reflected-splitting iteration on the lifted variable with
  an acceptance-based search over the relaxation.
- run_rpdhg: the combined method; the step search runs inside every
  iteration and an outer acceptance search picks the relaxation when a
  cheap activation rule decides it is worth the extra proximal pairs.

All solvers log a Trace with one row per iteration and identical column
meanings, documented on TraceRow.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import linops
from . import prox as proxfns
from .errors import LineSearchError, ParameterError

CSV_COLUMNS = ["iter", "objective", "best_objective", "residual_norm", "tau",
               "alpha", "inner_backtracks", "outer_trials", "activated",
               "elapsed_ms"]


@dataclass
class SaddleProblem:
    """Problem data: f, g as ProxFns, coupling operator a, optional split.

    The split (a complementary pair from bsplit) is required by the
    reflected-splitting solvers and ignored by the others.
    """

    f: object
    g: object
    a: object
    split: object = None


@dataclass
class SolverConfig:
    """Shared solver parameters; each solver reads the fields it needs.

    tau/sigma/rho drive the fixed-step method. tau0 seeds the step search
    and doubles as the splitting step of the reflected iteration. beta is
    the dual-to-primal step ratio, delta the search acceptance factor, mu
    the shrink factor for both searches, eps the residual improvement the
    relaxation search demands, eps_hat the improvement rate that trips the
    activation rule, alpha_bar the nominal relaxation and alpha_max the
    largest one tried. rtol > 0 stops a run once the logged residual falls
    below rtol times the first one.
    """

    tau: float = None
    sigma: float = None
    rho: float = 1.0
    tau0: float = 1.0
    beta: float = 1.0
    delta: float = 0.99
    mu: float = 0.7
    eps: float = 0.01
    eps_hat: float = 0.05
    alpha_bar: float = 0.5
    alpha_max: float = 8.0
    max_iters: int = 1000
    max_inner_backtracks: int = 100
    max_outer_trials: int = 30
    rtol: float = 0.0

    def __post_init__(self):
        pos = {"tau0": self.tau0, "beta": self.beta}
        for name, v in pos.items():
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be positive, got {v}")
        unit = {"delta": self.delta, "mu": self.mu, "eps": self.eps,
                "eps_hat": self.eps_hat}
        for name, v in unit.items():
            if not (0.0 < v < 1.0):
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")
        if not (0.0 < self.rho < 2.0):
            raise ParameterError(f"rho must lie in (0, 2), got {self.rho}")
        if not (0.0 < self.alpha_bar <= self.alpha_max):
            raise ParameterError(
                f"need 0 < alpha_bar <= alpha_max, got {self.alpha_bar}, {self.alpha_max}")
        for name, v in (("max_iters", self.max_iters),
                        ("max_inner_backtracks", self.max_inner_backtracks),
                        ("max_outer_trials", self.max_outer_trials)):
            if int(v) < 1:
                raise ParameterError(f"{name} must be at least 1, got {v}")
        if self.rtol < 0:
            raise ParameterError(f"rtol must be nonnegative, got {self.rtol}")
        for name, v in (("tau", self.tau), ("sigma", self.sigma)):
            if v is not None and not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be positive when given, got {v}")


@dataclass
class SolverState:
    """Iterate bundle passed to callbacks and between step functions."""

    k: int = 0
    x: object = None
    z: object = None
    tau: float = None
    theta: float = 1.0
    y: object = None     # lifted variable, reflected-splitting solvers only
    ax: object = None    # cached A x
    atz: object = None   # cached A* z


@dataclass
class TraceRow:
    """One iteration of any solver.

    residual_norm is the stacked displacement ||(dx, dz)|| for the
    fixed-step and step-search solvers, and the lifted-space residual of
    the accepted point for the reflected-splitting solvers. alpha is on
    the averaging scale (the fixed-step solver logs rho / 2).
    nominal_residual_norm stores the unrelaxed residual the acceptance
    test compared against; it is kept in memory but not written to CSV.
    """

    iter: int
    objective: float
    best_objective: float
    residual_norm: float
    tau: float
    alpha: float
    inner_backtracks: int
    outer_trials: int
    activated: bool
    elapsed_ms: float
    nominal_residual_norm: float = np.nan


class Trace:
    """Ordered list of TraceRows with best-objective bookkeeping."""

    def __init__(self):
        self.rows = []
        self._best = np.inf

    def log(self, **kw):
        self._best = min(self._best, kw["objective"])
        row = TraceRow(best_objective=self._best, **kw)
        self.rows.append(row)
        return row

    @property
    def best_objective(self):
        return self._best

    def __len__(self):
        return len(self.rows)


def objective_eval_feasible(prob, x):
    """f(x) + g(A x) after projecting x through any indicator f.

    Keeps objective columns finite for constrained problems: an iterate
    that is infinitesimally infeasible scores as its projection.
    """
    if prob.f.is_indicator:
        x = prob.f.prox(1.0, x)
    return prob.f.value(x) + prob.g.value(prob.a.apply(x))


def _finish(prob, x):
    return prob.f.prox(1.0, x) if prob.f.is_indicator else x


def initial_state(prob, config):
    """Zero starting point with cached operator applications."""
    return SolverState(k=0,
                       x=prob.a.dom.zeros(),
                       z=prob.a.cod.zeros(),
                       tau=config.tau0,
                       theta=1.0,
                       ax=prob.a.cod.zeros(),
                       atz=prob.a.dom.zeros())


def _need_split(prob, who):
    if prob.split is None:
        raise ParameterError(
            f"{who} needs prob.split (build one with bsplit.build_dense_B "
            f"or bsplit.build_mri_B)")


def run_pdhg(prob, config, callback=None):
    """Fixed-step relaxed primal-dual iteration.

    Steps tau and sigma must satisfy tau * sigma * ||A||^2 <= 1; omitted
    ones are filled conservatively from a power-iteration norm estimate.
    Returns (final feasible-projected x, Trace).
    """
    nrm = linops.op_norm_estimate(prob.a)
    if nrm == 0.0:
        raise ParameterError("run_pdhg: zero coupling operator")
    tau, sigma = config.tau, config.sigma
    if tau is None and sigma is None:
        tau = sigma = 0.99 / nrm
    elif sigma is None:
        sigma = 0.99 / (tau * nrm ** 2)
    elif tau is None:
        tau = 0.99 / (sigma * nrm ** 2)
    if tau * sigma * nrm ** 2 > 1.0 + 1e-9:
        raise ParameterError(
            f"step product tau*sigma*||A||^2 = {tau * sigma * nrm ** 2:.4g} exceeds 1")

    rho = config.rho
    gconj = proxfns.conjugate_prox(prob.g)
    x = prob.a.dom.zeros()
    z = prob.a.cod.zeros()
    ax = prob.a.cod.zeros()
    atz = prob.a.dom.zeros()
    trace = Trace()
    t0 = time.perf_counter()
    r_first = None
    for k in range(1, config.max_iters + 1):
        xb = prob.f.prox(tau, x - tau * atz)
        axb = prob.a.apply(xb)
        zb = gconj.prox(sigma, z + sigma * (2.0 * axb - ax))
        atzb = prob.a.adjoint(zb)
        dx = xb - x
        dz = zb - z
        x = x + rho * dx
        z = z + rho * dz
        ax = ax + rho * (axb - ax)
        atz = atz + rho * (atzb - atz)
        res = rho * float(np.sqrt(linops.norm(dx) ** 2 + linops.norm(dz) ** 2))
        obj = objective_eval_feasible(prob, x)
        trace.log(iter=k, objective=obj, residual_norm=res, tau=tau,
                  alpha=rho / 2.0, inner_backtracks=0, outer_trials=0,
                  activated=False, elapsed_ms=(time.perf_counter() - t0) * 1e3,
                  nominal_residual_norm=res)
        if callback is not None:
            callback(SolverState(k=k, x=x, z=z, tau=tau, ax=ax, atz=atz))
        r_first = res if r_first is None else r_first
        if config.rtol > 0 and res <= config.rtol * r_first:
            break
    return _finish(prob, x), trace


@dataclass
class _SearchResult:
    x_hat: object
    x_bar: object
    z_bar: object
    ax_bar: object
    atz_bar: object
    tau: float
    theta: float
    backtracks: int


def _tau_search(prob, config, state, gconj):
    """Backtracking search for the proximal step.

    From the carried iterate, take the primal prox once, then grow the
    step optimistically and shrink it by mu until
    sqrt(beta) * tau * ||A*(z_new - z_old)|| <= delta * ||z_new - z_old||.
    Each trial costs one dual prox and one adjoint application; the primal
    prox and its image under A are reused across trials.
    """
    tau_prev = state.tau
    beta = config.beta
    x_hat = prob.f.prox(tau_prev, state.x - tau_prev * state.atz)
    ax_hat = prob.a.apply(x_hat)
    tau = tau_prev * np.sqrt(1.0 + state.theta)
    for bt in range(config.max_inner_backtracks + 1):
        theta = tau / tau_prev
        x_bar = x_hat + theta * (x_hat - state.x)
        ax_bar = ax_hat + theta * (ax_hat - state.ax)
        z_bar = gconj.prox(beta * tau, state.z + (beta * tau) * ax_bar)
        atz_bar = prob.a.adjoint(z_bar)
        lhs = np.sqrt(beta) * tau * linops.norm(atz_bar - state.atz)
        rhs = config.delta * linops.norm(z_bar - state.z)
        if lhs <= rhs:
            return _SearchResult(x_hat, x_bar, z_bar, ax_bar, atz_bar,
                                 tau, theta, bt)
        tau *= config.mu
    raise LineSearchError(
        f"step search: no acceptable step within "
        f"{config.max_inner_backtracks} backtracks (last tau {tau:.3e})")


def _relax(state, res, alpha):
    """Average the carried iterate with the search output at relaxation alpha."""
    c = 2.0 * alpha
    x = (1.0 - c) * state.x + c * res.x_bar
    z = (1.0 - c) * state.z + c * res.z_bar
    ax = (1.0 - c) * state.ax + c * res.ax_bar
    atz = (1.0 - c) * state.atz + c * res.atz_bar
    return x, z, ax, atz


def searched_step(prob, config, state, alpha=0.5, _gconj=None):
    """One step-search iteration followed by relaxation with weight 2*alpha.

    Returns (new SolverState, number of backtracks). alpha = 0.5 is the
    plain un-averaged iteration that run_pdhg_ls repeats.
    """
    gconj = _gconj if _gconj is not None else proxfns.conjugate_prox(prob.g)
    res = _tau_search(prob, config, state, gconj)
    x, z, ax, atz = _relax(state, res, alpha)
    new = SolverState(k=state.k + 1, x=x, z=z, tau=res.tau, theta=res.theta,
                      ax=ax, atz=atz)
    return new, res.backtracks


def run_pdhg_ls(prob, config, callback=None):
    """Primal-dual iteration with the backtracking step search.

    Parameter free apart from the initial step tau0 and the ratio beta.
    Returns (final feasible-projected x, Trace).
    """
    gconj = proxfns.conjugate_prox(prob.g)
    state = initial_state(prob, config)
    trace = Trace()
    t0 = time.perf_counter()
    r_first = None
    for k in range(1, config.max_iters + 1):
        prev_x, prev_z = state.x, state.z
        state, bts = searched_step(prob, config, state, alpha=0.5, _gconj=gconj)
        res = float(np.sqrt(linops.norm(state.x - prev_x) ** 2
                            + linops.norm(state.z - prev_z) ** 2))
        obj = objective_eval_feasible(prob, state.x)
        trace.log(iter=k, objective=obj, residual_norm=res, tau=state.tau,
                  alpha=0.5, inner_backtracks=bts, outer_trials=0,
                  activated=False, elapsed_ms=(time.perf_counter() - t0) * 1e3,
                  nominal_residual_norm=res)
        if callback is not None:
            callback(state)
        r_first = res if r_first is None else r_first
        if config.rtol > 0 and res <= config.rtol * r_first:
            break
    return _finish(prob, state.x), trace


def pddr_residual(prob, x0, z0, x1, z1, tau):
    """Lifted-space displacement between two primal-dual states.

    Maps each (x, z) through y = (x - tau A* z, -tau B* z) and returns the
    difference as a block vector. Needs prob.split for B.
    """
    _need_split(prob, "pddr_residual")
    if not (np.isfinite(tau) and tau > 0):
        raise ParameterError(f"pddr_residual: tau must be positive, got {tau}")
    a, b = prob.a, prob.split.b
    part0 = (x1 - tau * a.adjoint(z1)) - (x0 - tau * a.adjoint(z0))
    part1 = -tau * (b.adjoint(z1) - b.adjoint(z0))
    return linops.BlockVec((part0, part1))


def activation_check(rows, config):
    """Decide whether the next iteration should run the relaxation search.

    Pure function of the completed Trace rows: activate on the first
    iteration, after a search that accepted a relaxation above the nominal
    one, or when the residual just dropped by more than eps_hat relative.
    """
    if not rows:
        return True
    last = rows[-1]
    if last.activated and last.alpha != config.alpha_bar:
        return True
    if len(rows) >= 2:
        prev = rows[-2].residual_norm
        if prev > 0.0 and last.residual_norm / prev < 1.0 - config.eps_hat:
            return True
    return False


def _alpha_candidates(config):
    # strictly decreasing trial relaxations above the nominal one
    out = []
    alpha = config.alpha_max
    while alpha > config.alpha_bar and len(out) < config.max_outer_trials:
        out.append(alpha)
        alpha *= config.mu
    return out


def _aux_residual(prob, config, gconj, point, tau):
    """Extra prox pair at a candidate point and the resulting residual norm.

    point is (x, z, ax, atz). The pair (x_new, z_new) is only used to
    measure the lifted-space displacement; it is never carried as state.
    """
    x, z, ax, atz = point
    beta = config.beta
    b = prob.split.b
    x_new = prob.f.prox(tau, x - tau * atz)
    ax_new = prob.a.apply(x_new)
    z_new = gconj.prox(beta * tau, z + (beta * tau) * (2.0 * ax_new - ax))
    atz_new = prob.a.adjoint(z_new)
    part0 = (x_new - tau * atz_new) - (x - tau * atz)
    part1 = -tau * (b.adjoint(z_new) - b.adjoint(z))
    return float(np.sqrt(linops.norm(part0) ** 2 + linops.norm(part1) ** 2))


def run_rpdhg(prob, config, callback=None):
    """Step search plus relaxation search; no tuning required.

    Every iteration runs the backtracking step search once. The candidate
    relaxations only reweight its output, so the search is shared across
    all of them. An extra prox pair measures the lifted-space residual of
    the nominal point each iteration; when the activation rule fires, the
    same measurement at larger relaxations finds the biggest one that
    still beats the nominal residual by a factor 1 - eps. Needs
    prob.split. Returns (final feasible-projected x, Trace).
    """
    _need_split(prob, "run_rpdhg")
    gconj = proxfns.conjugate_prox(prob.g)
    state = initial_state(prob, config)
    trace = Trace()
    t0 = time.perf_counter()
    r_first = None
    for k in range(1, config.max_iters + 1):
        res = _tau_search(prob, config, state, gconj)
        tau = res.tau
        nominal = _relax(state, res, config.alpha_bar)
        r_nominal = _aux_residual(prob, config, gconj, nominal, tau)

        activated = activation_check(trace.rows, config)
        accepted = nominal
        accepted_alpha = config.alpha_bar
        accepted_res = r_nominal
        trials = 0
        if activated:
            for alpha in _alpha_candidates(config):
                trial = _relax(state, res, alpha)
                r_trial = _aux_residual(prob, config, gconj, trial, tau)
                trials += 1
                if r_trial <= (1.0 - config.eps) * r_nominal:
                    accepted = trial
                    accepted_alpha = alpha
                    accepted_res = r_trial
                    break

        x, z, ax, atz = accepted
        state = SolverState(k=k, x=x, z=z, tau=tau, theta=res.theta,
                            ax=ax, atz=atz)
        obj = objective_eval_feasible(prob, x)
        trace.log(iter=k, objective=obj, residual_norm=accepted_res, tau=tau,
                  alpha=accepted_alpha, inner_backtracks=res.backtracks,
                  outer_trials=trials, activated=activated,
                  elapsed_ms=(time.perf_counter() - t0) * 1e3,
                  nominal_residual_norm=r_nominal)
        if callback is not None:
            callback(state)
        r_first = accepted_res if r_first is None else r_first
        if config.rtol > 0 and accepted_res <= config.rtol * r_first:
            break
    return _finish(prob, state.x), trace


def run_aoi_pddr(prob, config, callback=None):
    """Reflected splitting on the lifted variable with relaxation search.

    The problem is lifted through the split: the coupling becomes
    [A B] with row identity theta^{-1} I, the primal function ignores the
    second block and the composed g gets an exact prox. Each iteration
    evaluates the reflected map once at the nominal relaxation and once
    per candidate, accepting the largest candidate whose residual beats
    the nominal one by 1 - eps. Needs prob.split. Returns
    (final feasible-projected x, Trace).
    """
    _need_split(prob, "run_aoi_pddr")
    split = prob.split
    gamma = config.tau0
    c_op = linops.block_row([prob.a, split.b])
    g_lift = proxfns.prox_composed(prob.g, c_op, 1.0 / split.theta)
    b_zero = split.b.dom.zeros()

    def f_lift_prox(tau, v):
        return linops.BlockVec((prob.f.prox(tau, v.parts[0]), b_zero))

    def reflect(y):
        # u, then w at the reflected point; residual r = S(y) - y = 2 (w - u)
        u = f_lift_prox(gamma, y)
        w = g_lift.prox(gamma, 2.0 * u - y)
        return u, 2.0 * (w - u)

    y = c_op.dom.zeros()
    u_cur, r = reflect(y)
    trace = Trace()
    t0 = time.perf_counter()
    r_first = None
    for k in range(1, config.max_iters + 1):
        y_nominal = y + config.alpha_bar * r
        u_nominal, r_nominal = reflect(y_nominal)
        rn_nominal = r_nominal.norm()

        y_next, u_next, r_next = y_nominal, u_nominal, r_nominal
        accepted_alpha = config.alpha_bar
        trials = 0
        for alpha in _alpha_candidates(config):
            y_try = y + alpha * r
            u_try, r_try = reflect(y_try)
            trials += 1
            if r_try.norm() <= (1.0 - config.eps) * rn_nominal:
                y_next, u_next, r_next = y_try, u_try, r_try
                accepted_alpha = alpha
                break

        y, u_cur, r = y_next, u_next, r_next
        x_est = u_cur.parts[0]
        obj = objective_eval_feasible(prob, x_est)
        rn = r.norm()
        trace.log(iter=k, objective=obj, residual_norm=rn, tau=gamma,
                  alpha=accepted_alpha, inner_backtracks=0, outer_trials=trials,
                  activated=True, elapsed_ms=(time.perf_counter() - t0) * 1e3,
                  nominal_residual_norm=rn_nominal)
        if callback is not None:
            callback(SolverState(k=k, x=x_est, tau=gamma, y=y))
        r_first = rn if r_first is None else r_first
        if config.rtol > 0 and rn <= config.rtol * r_first:
            break
    return _finish(prob, u_cur.parts[0]), trace


SOLVERS = {
    "pdhg": run_pdhg,
    "pdhg-ls": run_pdhg_ls,
    "aoi-ls": run_aoi_pddr,
    "rpdhg": run_rpdhg,
}
