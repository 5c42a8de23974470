"""Trust logic: model-fit ratio, acceptance, sigma schedules and the
theoretical convergence constants used as run diagnostics.

sigma scales the quadratic term of the surrogate and acts as the reciprocal
of a trust-region radius: a round whose actual objective decrease falls short
of the model's prediction increases sigma, an over-conservative model
decreases it.
"""

import math

from .errors import ConfigError, DegenerateQuadraticTerm, InvalidInput, MissingConstant

SCHEDULES = ("threshold", "parameter_free", "fixed")

# Below this (scaled) model decrease the fit ratio is numerically meaningless.
DEGENERATE_REL_TOL = 1e-14


class TrustConfig:
    """Parameters of the adaptive sigma schedule.

    The threshold schedule needs gamma, zeta > 1 and 0 <= xi < 1/zeta.
    xi = 0 accepts every non-increasing step; any xi > 0 keeps the
    convergence guarantees.  sigma is clamped to [sigma_min, sigma_max]
    under every schedule.
    """

    __slots__ = ("sigma0", "gamma", "zeta", "xi", "schedule", "sigma_min",
                 "sigma_max", "sigma_fixed")

    def __init__(self, sigma0=1.0, gamma=1.2, zeta=1.2, xi=1e-6,
                 schedule="threshold", sigma_min=1e-8, sigma_max=1e8,
                 sigma_fixed=None):
        if schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {schedule!r}")
        if not (gamma > 1.0 and zeta > 1.0):
            raise ConfigError("gamma and zeta must both exceed 1")
        if not (0.0 <= xi < 1.0 / zeta):
            raise ConfigError("xi must satisfy 0 <= xi < 1/zeta")
        if not (0.0 < sigma_min <= sigma0 <= sigma_max):
            raise ConfigError("need 0 < sigma_min <= sigma0 <= sigma_max")
        if schedule == "fixed" and sigma_fixed is None:
            sigma_fixed = sigma0
        if sigma_fixed is not None and sigma_fixed <= 0:
            raise ConfigError("sigma_fixed must be positive")
        self.sigma0 = float(sigma0)
        self.gamma = float(gamma)
        self.zeta = float(zeta)
        self.xi = float(xi)
        self.schedule = schedule
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        self.sigma_fixed = None if sigma_fixed is None else float(sigma_fixed)

    def clamp(self, sigma):
        return min(max(sigma, self.sigma_min), self.sigma_max)


class RoundDecision:
    """Outcome of one trust evaluation."""

    __slots__ = ("rho", "accepted", "sigma_next", "reason")

    def __init__(self, rho, accepted, sigma_next, reason):
        self.rho = rho
        self.accepted = accepted
        self.sigma_next = sigma_next
        self.reason = reason


def compute_rho(obj_old, obj_new, model_new):
    """Ratio of actual to model-predicted decrease.

    rho = (obj_old - obj_new) / (obj_old - model_new).  Returns (rho,
    degenerate); a predicted decrease at numerical noise level flags the
    round degenerate (nan ratio), which callers treat as unsuccessful.
    """
    denom = obj_old - model_new
    if denom <= DEGENERATE_REL_TOL * (1.0 + abs(obj_old)):
        return math.nan, True
    return (obj_old - obj_new) / denom, False


def update_sigma_threshold(sigma, rho, cfg):
    """Three-branch schedule: divide by gamma when the step beat the model
    by more than zeta, keep sigma on a good fit, multiply by gamma otherwise.
    A degenerate (nan) rho counts as too aggressive."""
    if math.isnan(rho) or rho < 1.0 / cfg.zeta:
        sigma_next = cfg.gamma * sigma
    elif rho > cfg.zeta:
        sigma_next = sigma / cfg.gamma
    else:
        sigma_next = sigma
    return cfg.clamp(sigma_next)


def update_sigma_parameter_free(sigma, f_new, f_old, lin, quad_model, cfg=None):
    """Rescale sigma by the measured curvature misfit along the step.

    sigma_next = sigma * (f_new - f_old - lin) / (quad_model - f_old - lin),
    where lin is grad f(v)^T A delta and quad_model the value of the
    second-order approximation of f at the step; the denominator equals the
    model's quadratic part (sigma/2) delta^T Htilde delta.  Raises
    DegenerateQuadraticTerm when that part is numerically zero (sigma is then
    left unchanged by the caller).
    """
    denom = quad_model - f_old - lin
    if denom <= 1e-14:
        raise DegenerateQuadraticTerm(f"quadratic term {denom:.3e}")
    sigma_next = sigma * (f_new - f_old - lin) / denom
    if cfg is not None:
        sigma_next = cfg.clamp(sigma_next)
    return sigma_next


def _classify(rho, zeta):
    if math.isnan(rho):
        return "degenerate_denominator"
    if rho > zeta:
        return "too_conservative"
    if rho >= 1.0 / zeta:
        return "good_fit"
    return "too_aggressive"


def decide_round(obj_old, obj_new, model_new, sigma, cfg, pf_terms=None):
    """Full trust evaluation for one round: rho, acceptance, next sigma.

    pf_terms = (f_new, f_old, lin, quad_model) must be supplied for the
    parameter_free schedule.  A step is accepted iff rho >= xi and the
    predicted decrease was not degenerate.
    """
    rho, degenerate = compute_rho(obj_old, obj_new, model_new)
    accepted = (not degenerate) and rho >= cfg.xi
    if cfg.schedule == "fixed":
        sigma_next = cfg.sigma_fixed
    elif cfg.schedule == "threshold":
        sigma_next = update_sigma_threshold(sigma, rho, cfg)
    else:
        try:
            sigma_next = update_sigma_parameter_free(sigma, *pf_terms, cfg=cfg)
        except DegenerateQuadraticTerm:
            sigma_next = sigma
    return RoundDecision(rho, accepted, sigma_next, _classify(rho, cfg.zeta))


class ConvergenceConstants:
    """Closed-form constants of the two convergence guarantees.

    c1 (bounded-support regularizers) and c2 (strongly convex ones) are
    plug-in values from the run's observed quantities; the *_rounds methods
    turn them into predicted iteration counts.  Constants that need an
    unavailable ingredient are stored as None and raise MissingConstant when
    used.
    """

    __slots__ = ("c1", "c2", "sublinear_success_coeff", "unsuccessful_extra",
                 "tau", "mu", "xi", "eta", "sigma_sup", "sigma0", "gamma",
                 "r_bound", "support_bound", "eps0", "c_block")

    def __init__(self, **kw):
        for name in self.__slots__:
            setattr(self, name, kw[name])

    def successful_rounds_strongly_convex(self, eps):
        """Successful rounds needed to contract the suboptimality to eps."""
        if self.c2 is None:
            raise MissingConstant("c2 needs a strongly convex regularizer")
        return math.log(self.eps0 / eps) / math.log(1.0 / self.c2)

    def successful_rounds_bounded_support(self, eps):
        """Successful rounds needed to push the suboptimality below eps."""
        if self.sublinear_success_coeff is None:
            raise MissingConstant("needs a bounded-support regularizer")
        return self.sublinear_success_coeff / eps

    def total_rounds_strongly_convex(self, eps):
        extra = math.log(self.gamma * self.sigma_sup / self.sigma0) / math.log(self.gamma)
        return extra + 2.0 * self.successful_rounds_strongly_convex(eps)

    def total_rounds_bounded_support(self, eps):
        return self.unsuccessful_extra + 2.0 * self.successful_rounds_bounded_support(eps)

    def unsuccessful_rounds_bound(self, n_successful):
        """Upper bound on unsuccessful rounds given the successful count."""
        return self.unsuccessful_extra + n_successful


def predict_constants(spec, matrix, partition, cfg, eta, sigma_sup, eps0,
                      block_norms=None):
    """Evaluate the convergence constants for a problem and run.

    sigma_sup is the bound on the sigma sequence; the observed maximum of a
    finished run is the tightest valid choice for post-hoc checks.  eps0 is
    the initial suboptimality.  Needs xi > 0 and eta < 1.

      c1 = 2 (4 L^2 R^2 + tau eps0) / (tau xi (1 - eta))
      c2 = 1 - xi (1 - eta) mu tau / (c_A sigma_sup + mu tau)

    plus the success-count coefficient
    2 ((4/tau) L^2 R^2 sigma_sup + eps0) / (xi (1 - eta)) and the additive
    unsuccessful-round term log(sigma_sup / sigma0) / log(gamma).
    """
    from .sparse import block_norm_constant, column_norms

    if not 0.0 <= eta < 1.0:
        raise InvalidInput("eta must be in [0, 1)")
    if cfg.xi <= 0.0:
        raise InvalidInput("the guarantees need xi > 0")
    if sigma_sup <= 0.0 or eps0 < 0.0:
        raise InvalidInput("sigma_sup must be positive and eps0 non-negative")
    tau = spec.tau
    mu = spec.mu
    bound = spec.support_bound
    _, r_bound = column_norms(matrix)
    if block_norms is None:
        block_norms = block_norm_constant(matrix, partition)
    c_block = block_norms.spectral
    denom = cfg.xi * (1.0 - eta)

    c1 = None
    sub_coeff = None
    if math.isfinite(bound):
        c1 = 2.0 * (4.0 * bound**2 * r_bound**2 + tau * eps0) / (tau * denom)
        sub_coeff = 2.0 * ((4.0 / tau) * bound**2 * r_bound**2 * sigma_sup + eps0) / denom
    c2 = None
    if mu > 0.0:
        c2 = 1.0 - denom * mu * tau / (c_block * sigma_sup + mu * tau)
    extra = math.log(sigma_sup / cfg.sigma0) / math.log(cfg.gamma)
    return ConvergenceConstants(
        c1=c1, c2=c2, sublinear_success_coeff=sub_coeff,
        unsuccessful_extra=extra, tau=tau, mu=mu, xi=cfg.xi, eta=eta,
        sigma_sup=sigma_sup, sigma0=cfg.sigma0, gamma=cfg.gamma,
        r_bound=r_bound, support_bound=bound, eps0=eps0, c_block=c_block)


def _exp_remainder_ratio(x):
    # (e^x - x - 1) / x^2 = sum_j x^j / (j+2)!.  The direct form cancels
    # catastrophically for small x, and even expm1(x) - x only reaches
    # ~2eps/x relative accuracy, so the series handles everything below 0.05.
    if x < 0.05:
        term = 0.5
        total = 0.5
        for j in range(1, 16):
            term *= x / (j + 2)
            total += term
            if term < 1e-20 * total:
                break
        return total
    return (math.expm1(x) - x) / (x * x)


def sigma_sup_quasi_self_concordant(m_f, step_norm, k_parts, gamma):
    """Safe sigma bound for quasi-self-concordant f:

    2 K gamma (e^{M ||delta||} - M ||delta|| - 1) / (M^2 ||delta||),
    which tends to K gamma ||delta|| as M ||delta|| -> 0.
    """
    if m_f <= 0 or step_norm <= 0 or k_parts <= 0 or gamma <= 0:
        raise InvalidInput("all inputs must be positive")
    x = m_f * step_norm
    return 2.0 * k_parts * gamma * step_norm * _exp_remainder_ratio(x)


def sigma_sup_lipschitz_hessian(lipschitz, direction_agreement, h_norm, gamma):
    """Safe sigma bound under a Lipschitz Hessian:
    gamma (L + C + 1) / (2 ||Htilde||)."""
    if lipschitz <= 0 or direction_agreement <= 0 or h_norm <= 0 or gamma <= 0:
        raise InvalidInput("all inputs must be positive")
    return gamma / (2.0 * h_norm) * (lipschitz + direction_agreement + 1.0)


def sigma_sup_bounds(kind, **params):
    """Dispatch to one of the two closed-form sigma_sup bounds.

    kind "quasi_self_concordant" takes (m_f, step_norm, k_parts, gamma);
    kind "lipschitz_hessian" takes (lipschitz, direction_agreement, h_norm,
    gamma).
    """
    if kind == "quasi_self_concordant":
        return sigma_sup_quasi_self_concordant(**params)
    if kind == "lipschitz_hessian":
        return sigma_sup_lipschitz_hessian(**params)
    raise InvalidInput(f"unknown bound kind {kind!r}")
