"""Quasi maximum likelihood, conditional likelihood and variance contrast
estimators of the peer effects model

"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
import scipy.optimize
import scipy.special
import xarray as xr

from .data_attributes import LoadAttributes
from .data_operator import check_identification
from .errors import (
    CategoryError,
    CollinearityError,
    ConfigError,
    DimensionError,
    DomainError,
    IdentificationError,
    NegativeVarianceError,
    NonConvergenceError,
    OutOfRangeError,
    SingularBlockError,
    SingularInformationError,
    WeakIdentificationError,
)
from .inference import residuals, sandwich_vcov
from .likelihood import (
    Delta,
    Theta,
    beta_gls,
    log_likelihood,
    parameter_names,
    profile_loglik,
    within_concentrated,
    within_hessian,
    within_log_likelihood,
    within_score,
)

module_logger = logging.getLogger("peerqml.estimators")
module_logger.debug("loading estimators")

BOUNDARY_TOL = 1e-10
WITHIN_VARIATION_TOL = 1e-10
WITHIN_CONDITION_LIMIT = 1e10
CV_DENOMINATOR_TOL = 1e-10
CMLE_GRID_SIZE = 41
ROUNDING_TOL = 1e-13
PEER_MEANS = ("leave_out_mean", "full_mean")

_NUMERICAL_ERRORS = (
    CollinearityError,
    DomainError,
    SingularBlockError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings

    Parameters
    ----------
    max_iter : int
        iteration limit of the quasi-Newton search

    grad_tol : float
        tolerance on the sup-norm of the score at the estimate

    multistart : int
        number of starting points, the first one deterministic

    lambda_bound : float
        lambda is kept inside [-lambda_bound, lambda_bound]

    sigma_eps2_bounds : tuple of float
        box for the idiosyncratic variances

    seed : int
        seed of the restart draws

    workers : int
        threads used to run the restarts

    newton_steps : int
        maximum number of Newton polishing steps

    force : bool
        fit even when the identification check fails

    """

    max_iter: int = 500
    grad_tol: float = 1e-6
    multistart: int = 5
    lambda_bound: float = 0.99
    sigma_eps2_bounds: tuple = (1e-6, 1e6)
    seed: int = 0
    workers: int = 1
    newton_steps: int = 50
    force: bool = False

    def __post_init__(self):

        object.__setattr__(
            self, "sigma_eps2_bounds", tuple(self.sigma_eps2_bounds)
        )

        if not self.grad_tol > 0:
            raise ConfigError("fit.grad_tol", "must be positive")
        if int(self.multistart) < 1:
            raise ConfigError("fit.multistart", "must be at least 1")
        if int(self.max_iter) < 1:
            raise ConfigError("fit.max_iter", "must be at least 1")
        if int(self.workers) < 1:
            raise ConfigError("fit.workers", "must be at least 1")
        if int(self.newton_steps) < 0:
            raise ConfigError("fit.newton_steps", "must be non negative")
        if not 0 < self.lambda_bound < 1:
            raise ConfigError("fit.lambda_bound", "must lie in (0, 1)")
        if int(self.seed) < 0:
            raise ConfigError("fit.seed", "must be non negative")

        if len(self.sigma_eps2_bounds) != 2:
            raise ConfigError("fit.sigma_eps2_bounds", "expecting [lo, hi]")
        lo, hi = self.sigma_eps2_bounds
        if not 0 < lo < hi:
            raise ConfigError("fit.sigma_eps2_bounds", "need 0 < lo < hi")

    @classmethod
    def from_dict(cls, values, path="fit"):
        """Build FitOptions from a configuration mapping"""

        if not isinstance(values, dict):
            raise ConfigError(path, "expecting an object")

        known = cls.__dataclass_fields__
        for key in values:
            if key not in known:
                raise ConfigError(f"{path}.{key}", "unknown key")

        try:
            return cls(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(path, str(err)) from err

    def to_dict(self):

        values = asdict(self)
        values["sigma_eps2_bounds"] = list(self.sigma_eps2_bounds)

        return values


def _to_dict_or_none(value):

    return None if value is None else value.to_dict()


@dataclass(eq=False)
class Estimate:
    """Result of a likelihood based fit

    Entries of delta and vcov that the estimator does not cover
    are NaN.

    """

    estimator: str
    delta: Delta
    names: list
    vcov: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    boundary_sigma_alpha: bool = False
    dropped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    moments: object = None
    identification: object = None

    @property
    def std_err(self):
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.diag(self.vcov))

    @property
    def values(self):
        return self.delta.to_vector()

    def to_dict(self):

        values = self.values
        std_err = self.std_err

        return {
            "estimator": self.estimator,
            "parameters": {
                name: {"estimate": values[i], "std_err": std_err[i]}
                for i, name in enumerate(self.names)
            },
            "names": list(self.names),
            "vcov": self.vcov.tolist(),
            "loglik": self.loglik,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "boundary_sigma_alpha": bool(self.boundary_sigma_alpha),
            "dropped": list(self.dropped),
            "warnings": list(self.warnings),
            "moments": _to_dict_or_none(self.moments),
            "identification": _to_dict_or_none(self.identification),
        }

    def to_dataset(self):
        """Estimates as a xarray.Dataset indexed by parameter"""

        ds = xr.Dataset(
            {
                "estimate": ("parameter", self.values),
                "std_err": ("parameter", self.std_err),
                "vcov": (("parameter", "parameter_2"), self.vcov),
            },
            coords={"parameter": self.names, "parameter_2": self.names},
        )
        LoadAttributes(
            ds,
            extra={
                "estimator": self.estimator,
                "loglik": self.loglik,
                "converged": self.converged,
                "boundary_sigma_alpha": self.boundary_sigma_alpha,
            },
        )

        return ds


@dataclass(eq=False)
class CvEstimate:
    """Variance contrast estimate of (lambda, sigma_alpha2)"""

    spec: str
    lam: float
    sigma_alpha2: float
    sizes: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "estimator": "cv",
            "spec": self.spec,
            "parameters": {
                "lambda": {"estimate": self.lam},
                "sigma_alpha2": {"estimate": self.sigma_alpha2},
            },
            "sizes": [int(m) for m in self.sizes],
            "weights": list(self.weights),
            "warnings": list(self.warnings),
        }


@dataclass(eq=False)
class CvMoments:
    """Cell means used by the variance contrast estimator

    Parameters
    ----------
    table : pd.DataFrame
        one row per (m, category) cell with the columns count,
        ybar2 (mean of the squared centered group mean) and
        yy_within (mean within sum of squares)

    """

    table: pd.DataFrame

    @classmethod
    def from_dataset(cls, d):

        stats = d.stats
        y_bar = stats.y_bar - stats.y_bar.mean()
        frame = pd.DataFrame(
            {
                "m": stats.m.astype(int),
                "category": stats.category,
                "ybar2": y_bar**2,
                "yy_within": stats.yy_within,
            }
        )
        table = (
            frame.groupby(["m", "category"])
            .agg(
                count=("ybar2", "size"),
                ybar2=("ybar2", "mean"),
                yy_within=("yy_within", "mean"),
            )
            .reset_index()
        )

        return cls(table=table)


def _check_options(opts):

    if opts is None:
        return FitOptions()

    if not isinstance(opts, FitOptions):
        module_logger.error("wrong options type: expecting FitOptions")
        raise TypeError

    return opts


def _check_identified(d, opts, required):

    report = check_identification(d)
    if not required(report) and not opts.force:
        module_logger.error("design does not identify the parameters")
        raise IdentificationError("; ".join(report.notes))

    return report


@dataclass(eq=False)
class _Candidate:

    theta: Theta
    value: float
    gradient: np.ndarray
    iterations: int
    start: int


class _Reparametrization:
    """Unconstrained coordinates of theta

    lam = L tanh(a), sigma_alpha2 = softplus(c) and
    sigma_eps2_j = exp(b_j) clipped to the configured box.

    """

    def __init__(self, opts, pinned=False):

        self.bound = opts.lambda_bound
        self.lo, self.hi = opts.sigma_eps2_bounds
        self.pinned = pinned

    def theta(self, u):

        sigma_alpha2 = 0.0 if self.pinned else np.logaddexp(0.0, u[1])

        return Theta(
            self.bound * np.tanh(u[0]),
            sigma_alpha2,
            np.clip(np.exp(np.minimum(u[2:], 700)), self.lo, self.hi),
        )

    def jacobian(self, u):

        sigma_eps2 = np.exp(np.minimum(u[2:], 700))
        inside = (sigma_eps2 > self.lo) & (sigma_eps2 < self.hi)

        return np.concatenate(
            [
                [self.bound * (1 - np.tanh(u[0]) ** 2)],
                [0.0 if self.pinned else scipy.special.expit(u[1])],
                np.where(inside, sigma_eps2, 0.0),
            ]
        )

    def coordinates(self, theta):

        lam = np.clip(theta.lam / self.bound, -1 + 1e-12, 1 - 1e-12)
        sigma_alpha2 = max(theta.sigma_alpha2, 1e-12)

        return np.concatenate(
            [
                [np.arctanh(lam), np.log(np.expm1(sigma_alpha2))],
                np.log(theta.sigma_eps2),
            ]
        )


def _project(x, opts):
    """Clip a theta vector onto the admissible box"""

    lo, hi = opts.sigma_eps2_bounds
    x = x.copy()
    x[0] = np.clip(x[0], -opts.lambda_bound, opts.lambda_bound)
    x[1] = max(x[1], 0.0)
    x[2:] = np.clip(x[2:], lo, hi)

    return x


def _kkt_norm(theta, gradient, opts):
    """Sup-norm of the gradient projected on the feasible directions"""

    lo, hi = opts.sigma_eps2_bounds
    x = theta.to_vector()
    lower = np.concatenate([[-opts.lambda_bound, 0.0], np.full(theta.J, lo)])
    upper = np.concatenate([[opts.lambda_bound, np.inf], np.full(theta.J, hi)])

    g = gradient.copy()
    at_lower = x <= lower
    at_upper = x >= upper
    g[at_lower] = np.maximum(g[at_lower], 0.0)
    g[at_upper] = np.minimum(g[at_upper], 0.0)

    return np.max(np.abs(g))


def _within_rounding(trial, value):
    """Objective values equal up to floating point noise"""

    return trial >= value - ROUNDING_TOL * (1 + abs(value))


def _safe_profile(d, theta, with_hessian=False):

    try:
        return profile_loglik(d, theta, with_hessian=with_hessian)
    except _NUMERICAL_ERRORS:
        return -np.inf, None, None, None


def _newton_polish(d, theta, opts, pinned=False):
    """Damped Newton ascent on the concentrated likelihood

    Steps are halved until the iterate stays in the box and the
    objective does not decrease. Near the optimum a step that only
    loses floating point noise is taken when it shrinks the gradient.

    """

    free = np.ones(2 + theta.J, dtype=bool)
    if pinned:
        free[1] = False

    value, gradient, hess, _ = profile_loglik(d, theta, with_hessian=True)

    steps = 0
    while steps < opts.newton_steps:
        if d.N * _kkt_norm(theta, gradient, opts) < opts.grad_tol:
            break

        g_free = gradient[free]
        try:
            direction = np.linalg.solve(-hess[np.ix_(free, free)], g_free)
        except np.linalg.LinAlgError:
            direction = g_free
        if direction @ g_free <= 0:
            direction = g_free

        x = theta.to_vector()
        t = 1.0
        accepted = False
        while t > 1e-12:
            candidate = x.copy()
            candidate[free] += t * direction
            trial = Theta.from_vector(_project(candidate, opts))
            trial_value, trial_gradient, trial_hess, _ = _safe_profile(
                d, trial, with_hessian=True
            )
            if trial_value >= value or (
                _within_rounding(trial_value, value)
                and _kkt_norm(trial, trial_gradient, opts)
                < _kkt_norm(theta, gradient, opts)
            ):
                accepted = True
                break
            t /= 2

        if not accepted:
            break

        steps += 1
        module_logger.debug(f"newton step {steps}: Q_N={trial_value:.12g}")
        theta, value, gradient, hess = (
            trial,
            trial_value,
            trial_gradient,
            trial_hess,
        )

    return theta, value, gradient, steps


def _fit_from_start(d, theta0, opts, start, pinned=False):
    """Quasi-Newton search from theta0 followed by Newton polishing"""

    mapping = _Reparametrization(opts, pinned=pinned)

    def objective(u):

        theta = mapping.theta(u)
        value, gradient, _, _ = _safe_profile(d, theta)
        if not np.isfinite(value):
            return np.inf, np.zeros_like(u)

        return -value, -gradient * mapping.jacobian(u)

    result = scipy.optimize.minimize(
        objective,
        mapping.coordinates(theta0),
        jac=True,
        method="BFGS",
        options={"maxiter": opts.max_iter, "gtol": opts.grad_tol},
    )
    module_logger.debug(
        f"start {start}: BFGS {result.nit} iterations, {result.message}"
    )

    theta = mapping.theta(result.x)
    theta, value, gradient, steps = _newton_polish(d, theta, opts, pinned)

    return _Candidate(
        theta=theta,
        value=value,
        gradient=gradient,
        iterations=int(result.nit) + steps,
        start=start,
    )


def _moment_start(d, opts):
    """Deterministic start at lambda = 0 with moment based variances"""

    stats = d.stats
    ols = Theta(0.0, 0.0, np.ones(d.J))
    res = residuals(d, Delta(ols, beta_gls(d, ols)))

    starts = np.concatenate([[0], np.cumsum(res.m)[:-1]])
    uu = np.add.reduceat(res.u_dot**2, starts)
    j = stats.category - 1
    sigma_eps2 = np.bincount(j, weights=uu, minlength=d.J) / np.bincount(
        j, weights=stats.m - 1, minlength=d.J
    )
    lo, hi = opts.sigma_eps2_bounds
    sigma_eps2 = np.clip(sigma_eps2, lo, hi)

    sigma_alpha2 = np.mean(res.u_bar**2 - sigma_eps2[j] / stats.m)
    sigma_alpha2 = max(sigma_alpha2, 1e-2 * sigma_eps2.mean())

    return Theta(0.0, sigma_alpha2, sigma_eps2)


def _random_starts(theta0, opts):

    rng = np.random.Generator(np.random.Philox(opts.seed))
    lo, hi = opts.sigma_eps2_bounds

    starts = [theta0]
    for _ in range(opts.multistart - 1):
        lam = rng.uniform(-opts.lambda_bound, opts.lambda_bound)
        scale = np.exp(rng.uniform(-1, 1, size=1 + theta0.J))
        starts.append(
            Theta(
                lam,
                theta0.sigma_alpha2 * scale[0],
                np.clip(theta0.sigma_eps2 * scale[1:], lo, hi),
            )
        )

    return starts


def _run_starts(d, starts, opts):

    def run(item):
        index, theta0 = item
        try:
            return _fit_from_start(d, theta0, opts, index)
        except _NUMERICAL_ERRORS as err:
            module_logger.warning(f"start {index} failed: {err}")
            return None

    items = list(enumerate(starts))
    if opts.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            candidates = list(pool.map(run, items))
    else:
        candidates = [run(item) for item in items]

    return [c for c in candidates if c is not None]


def _best(candidates):
    """Highest objective, ties broken by the lowest start index"""

    best = None
    for candidate in candidates:
        if best is None or candidate.value > best.value:
            best = candidate

    return best


def fit_qmle(d, opts=None):
    """Quasi maximum likelihood estimate of the peer effects model

    The concentrated likelihood Q_N(theta) is maximized from
    several starting points; beta is then recovered by GLS.

    Parameters
    ----------
    d : Dataset

    opts : FitOptions, optional

    Returns
    -------
    Estimate

    Raises
    ------
    IdentificationError
        when the design does not identify theta and opts.force is False

    NonConvergenceError
        when no start satisfies the first order condition; the best
        iterate is attached as ``best``

    """

    opts = _check_options(opts)
    report = _check_identified(d, opts, lambda r: r.identified)

    theta0 = _moment_start(d, opts)
    candidates = _run_starts(d, _random_starts(theta0, opts), opts)
    if not candidates:
        module_logger.error("every start failed")
        raise NonConvergenceError("all starting points failed", best=None)

    best = _best(candidates)
    module_logger.info(
        f"best start {best.start}: Q_N={best.value:.12g}, "
        f"lambda={best.theta.lam:.6f}"
    )

    messages = []
    if best.theta.sigma_alpha2 < BOUNDARY_TOL:
        pinned_start = Theta(best.theta.lam, 0.0, best.theta.sigma_eps2)
        try:
            pinned = _fit_from_start(
                d, pinned_start, opts, best.start, pinned=True
            )
        except _NUMERICAL_ERRORS as err:
            module_logger.warning(f"fit with sigma_alpha2 = 0 failed: {err}")
            pinned = None

        if pinned is not None and pinned.value >= best.value - BOUNDARY_TOL:
            best = pinned

    boundary = best.theta.sigma_alpha2 < BOUNDARY_TOL
    if boundary:
        message = (
            "sigma_alpha2 estimated at the boundary 0, "
            "its standard error is not reported"
        )
        module_logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)
        messages.append(message)

    beta = beta_gls(d, best.theta)
    delta = Delta(best.theta, beta)
    names = parameter_names(d.J, d.z_names)
    converged = (
        d.N * _kkt_norm(best.theta, best.gradient, opts) < opts.grad_tol
    )

    parameters = np.ones(len(names), dtype=bool)
    if boundary:
        parameters[1] = False

    vcov = np.full((len(names), len(names)), np.nan)
    moments = None
    try:
        result = sandwich_vcov(d, delta, parameters=parameters)
        vcov = result.sandwich
        moments = result.moments
        messages.extend(result.warnings)
    except (
        SingularInformationError,
        NegativeVarianceError,
        np.linalg.LinAlgError,
    ) as err:
        module_logger.warning(f"no standard errors: {err}")
        messages.append(f"standard errors not available: {err}")

    estimate = Estimate(
        estimator="qmle",
        delta=delta,
        names=names,
        vcov=vcov,
        loglik=log_likelihood(d, delta),
        converged=bool(converged),
        iterations=best.iterations,
        boundary_sigma_alpha=bool(boundary),
        warnings=messages,
        moments=moments,
        identification=report,
    )

    if not converged:
        module_logger.error("first order condition not satisfied")
        raise NonConvergenceError(
            "QMLE did not converge, the best iterate is attached",
            best=estimate,
        )

    return estimate


def _within_columns(d):
    """Regressors kept by the within likelihood

    Columns without within group variation are dropped first,
    then, in column order, columns that make the within Gram
    matrix ill-conditioned.

    """

    stats = d.stats
    zz = stats.zz_within.sum(axis=0)
    total = np.diag(zz) + np.einsum("r,ri->i", stats.m, stats.z_bar**2)

    kept, dropped = [], []
    for column in range(d.k_z):
        if not zz[column, column] > WITHIN_VARIATION_TOL * total[column]:
            dropped.append(column)
            continue

        trial = kept + [column]
        gram = zz[np.ix_(trial, trial)]
        scale = 1.0 / np.sqrt(np.diag(gram))
        condition = np.linalg.cond(gram * np.outer(scale, scale))
        if condition < WITHIN_CONDITION_LIMIT:
            kept.append(column)
        else:
            dropped.append(column)

    return kept, dropped


def _safe_within(d, lam, columns):

    try:
        return within_concentrated(d, lam, columns)[0]
    except _NUMERICAL_ERRORS:
        return -np.inf


def fit_cmle(d, opts=None):
    """Conditional (within group) maximum likelihood estimate

    Only lambda, a common sigma_eps2 and the coefficients of the
    regressors with within group variation are estimated; the
    other entries of the Estimate are NaN. The covariance is the
    inverse of the negative within Hessian; sigma_eps2 gets no
    variance.

    Parameters
    ----------
    d : Dataset

    opts : FitOptions, optional

    Returns
    -------
    Estimate

    """

    opts = _check_options(opts)
    stats = d.stats

    if not stats.yy_within.sum() > 0:
        module_logger.error("outcome without within group variation")
        raise CollinearityError("y has no within group variation")

    report = _check_identified(d, opts, lambda r: r.scenario_a)

    messages = []
    if d.J > 1:
        message = (
            f"the within likelihood pools the {d.J} categories "
            "into a single sigma_eps2"
        )
        module_logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)
        messages.append(message)

    kept, dropped = _within_columns(d)
    dropped_names = [d.z_names[c] for c in dropped]
    module_logger.info(f"within likelihood drops {dropped_names}")

    bound = opts.lambda_bound
    grid = np.linspace(-bound, bound, CMLE_GRID_SIZE)
    values = np.array([_safe_within(d, lam, kept) for lam in grid])
    i = int(np.argmax(values))

    result = scipy.optimize.minimize_scalar(
        lambda lam: -_safe_within(d, lam, kept),
        bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]),
        method="bounded",
        options={"xatol": 1e-10, "maxiter": opts.max_iter},
    )

    lam = float(result.x)
    value, sigma2, beta_w = within_concentrated(d, lam, kept)
    x = np.concatenate([[lam, sigma2], beta_w])

    def unpack(x):
        return x[0], x[1], x[2:]

    def sup_score(x):
        return np.max(np.abs(within_score(d, *unpack(x), kept)))

    steps = 0
    gradient = within_score(d, *unpack(x), kept)
    hess = within_hessian(d, *unpack(x), kept)
    while steps < opts.newton_steps:
        if np.max(np.abs(gradient)) < opts.grad_tol:
            break

        try:
            direction = np.linalg.solve(-hess, gradient)
        except np.linalg.LinAlgError:
            direction = gradient
        if direction @ gradient <= 0:
            direction = gradient

        t = 1.0
        accepted = False
        while t > 1e-12:
            candidate = x + t * direction
            if abs(candidate[0]) <= bound and candidate[1] > 0:
                trial = within_log_likelihood(d, *unpack(candidate), kept)
                if trial >= value or (
                    _within_rounding(trial, value)
                    and sup_score(candidate) < np.max(np.abs(gradient))
                ):
                    accepted = True
                    break
            t /= 2

        if not accepted:
            break

        steps += 1
        x, value = candidate, trial
        gradient = within_score(d, *unpack(x), kept)
        hess = within_hessian(d, *unpack(x), kept)

    converged = np.max(np.abs(gradient)) < opts.grad_tol

    names = parameter_names(d.J, d.z_names)
    full_index = (
        [0] + list(range(2, 2 + d.J)) + [2 + d.J + c for c in kept]
    )
    local_index = [0] + [1] * d.J + list(range(2, 2 + len(kept)))

    vector = np.full(len(names), np.nan)
    vector[full_index] = x[local_index]

    vcov = np.full((len(names), len(names)), np.nan)
    try:
        within_vcov = np.linalg.inv(-hess)
        vcov[np.ix_(full_index, full_index)] = within_vcov[
            np.ix_(local_index, local_index)
        ]
        vcov[2 : 2 + d.J, :] = np.nan
        vcov[:, 2 : 2 + d.J] = np.nan
    except np.linalg.LinAlgError as err:
        module_logger.warning(f"no standard errors: {err}")
        messages.append(f"standard errors not available: {err}")

    estimate = Estimate(
        estimator="cmle",
        delta=Delta.from_vector(vector, d.J),
        names=names,
        vcov=vcov,
        loglik=float(value),
        converged=bool(converged),
        iterations=int(result.nfev) + steps,
        dropped=dropped_names,
        warnings=messages,
        identification=report,
    )

    if not converged:
        module_logger.error("within likelihood did not converge")
        raise NonConvergenceError(
            "CMLE did not converge, the best iterate is attached",
            best=estimate,
        )

    return estimate


def _check_peer_mean(spec):

    if spec not in PEER_MEANS:
        module_logger.error(f"unknown peer mean specification: {spec}")
        raise ValueError(f"spec must be one of {PEER_MEANS}")


def solve_graham_cv(moments, spec="leave_out_mean"):
    """Solve the variance contrast between two categories for lambda

    For every group size present in both categories the contrast of
    the squared group means is divided by the contrast of the within
    sums of squares, which pins down lambda. The size specific
    solutions are averaged with weights R_1 R_2 / (R_1 + R_2).
    sigma_alpha2 then follows from the group mean moment at the
    solved lambda.

    Parameters
    ----------
    moments : CvMoments

    spec : str
        ``leave_out_mean`` or ``full_mean``, the peer average in the
        outcome equation

    Returns
    -------
    CvEstimate

    """

    _check_peer_mean(spec)
    table = moments.table

    if set(table["category"]) != {1, 2}:
        module_logger.error("the variance contrast needs categories 1 and 2")
        raise CategoryError("expecting exactly two categories, 1 and 2")

    cells = table.set_index(["m", "category"])
    shared = sorted(
        set(table.loc[table["category"] == 1, "m"])
        & set(table.loc[table["category"] == 2, "m"])
    )

    messages = []
    sizes, solutions, weights = [], [], []
    for m in shared:
        k = m - 1
        first = cells.loc[(m, 1)]
        second = cells.loc[(m, 2)]

        scale = m * k**3 if spec == "leave_out_mean" else m * k
        denominator = (first["yy_within"] - second["yy_within"]) / scale
        numerator = first["ybar2"] - second["ybar2"]

        if abs(denominator) < CV_DENOMINATOR_TOL or not (
            numerator / denominator > 0
        ):
            message = f"size {m} skipped: variance contrast not informative"
            module_logger.warning(message)
            messages.append(message)
            continue

        q = np.sqrt(numerator / denominator)
        if spec == "leave_out_mean":
            lam = (q - k) / (1 + q)
            if not -1 < lam < 1:
                message = f"size {m} skipped: no root in (-1, 1)"
                module_logger.warning(message)
                messages.append(message)
                continue
        else:
            lam = 1 - 1 / q

        sizes.append(m)
        solutions.append(lam)
        r_1, r_2 = first["count"], second["count"]
        weights.append(r_1 * r_2 / (r_1 + r_2))

    if not solutions and spec == "full_mean":
        weighted = pd.DataFrame(
            {
                "category": table["category"],
                "count": table["count"],
                "ybar2": table["ybar2"] * table["count"],
                "yy": table["yy_within"]
                / (table["m"] * (table["m"] - 1))
                * table["count"],
            }
        ).groupby("category")
        pooled = weighted[["ybar2", "yy"]].sum().div(
            weighted["count"].sum(), axis=0
        )
        denominator = pooled.loc[1, "yy"] - pooled.loc[2, "yy"]
        numerator = pooled.loc[1, "ybar2"] - pooled.loc[2, "ybar2"]
        if abs(denominator) >= CV_DENOMINATOR_TOL and (
            numerator / denominator > 0
        ):
            messages.append("no shared size: pooled category means used")
            solutions.append(1 - 1 / np.sqrt(numerator / denominator))
            weights.append(1.0)

    if not solutions:
        module_logger.error("no informative variance contrast")
        raise WeakIdentificationError(
            "category variances are too close to solve for lambda"
        )

    lam = float(np.average(solutions, weights=weights))

    m = table["m"].to_numpy(dtype=float)
    k = m - 1
    if spec == "leave_out_mean":
        within = (k + lam) ** 2 * table["yy_within"] / (m * k**3)
    else:
        within = table["yy_within"] / (m * k)
    nu = (1 - lam) ** 2 * table["ybar2"] - within
    sigma_alpha2 = float(np.average(nu, weights=table["count"]))

    module_logger.info(f"variance contrast: lambda={lam:.6f}")

    return CvEstimate(
        spec=spec,
        lam=lam,
        sigma_alpha2=sigma_alpha2,
        sizes=sizes,
        weights=[float(w) for w in weights],
        warnings=messages,
    )


def fit_graham_cv(d, spec="leave_out_mean"):
    """Variance contrast estimator on a Dataset without covariates

    Parameters
    ----------
    d : Dataset
        intercept only model with J = 2

    spec : str
        ``leave_out_mean`` or ``full_mean``

    Returns
    -------
    CvEstimate

    """

    if d.k_z != 1:
        module_logger.error("variance contrast with covariates")
        raise DimensionError(
            "the variance contrast estimator takes no covariates"
        )

    if d.J != 2:
        module_logger.error(f"variance contrast with J={d.J}")
        raise CategoryError("the variance contrast estimator needs J = 2")

    return solve_graham_cv(CvMoments.from_dataset(d), spec=spec)


def population_moments(
    m, lam, sigma_eps2, sigma_alpha2, peer_mean="leave_out_mean"
):
    """Population within and between variances of the outcome

    Parameters
    ----------
    m : int or np.ndarray
        group size

    lam : float

    sigma_eps2, sigma_alpha2 : float

    peer_mean : str
        ``leave_out_mean`` or ``full_mean``

    Returns
    -------
    varw : float
        E[y_dot' y_dot / (m - 1)]

    varb : float
        E[y_bar^2] in the model without covariates

    """

    _check_peer_mean(peer_mean)
    k = np.asarray(m, dtype=float) - 1
    between = (sigma_alpha2 + sigma_eps2 / (k + 1)) / (1 - lam) ** 2

    if peer_mean == "leave_out_mean":
        return k**2 * sigma_eps2 / (k + lam) ** 2, between

    return sigma_eps2 * np.ones_like(k), between


def population_cv_moments(
    sizes,
    lam,
    sigma_eps2,
    sigma_alpha2,
    counts=None,
    peer_mean="leave_out_mean",
):
    """CvMoments holding exact population values

    Parameters
    ----------
    sizes : list of int
        group sizes present in both categories

    sigma_eps2 : sequence of two floats
        idiosyncratic variance of categories 1 and 2

    counts : sequence of int, optional
        number of groups per cell, 100 by default

    """

    rows = []
    for m in sizes:
        for j, variance in enumerate(sigma_eps2, start=1):
            varw, varb = population_moments(
                m, lam, variance, sigma_alpha2, peer_mean
            )
            rows.append(
                {
                    "m": int(m),
                    "category": j,
                    "count": 100 if counts is None else counts[j - 1],
                    "ybar2": float(varb),
                    "yy_within": float((m - 1) * varw),
                }
            )

    return CvMoments(table=pd.DataFrame(rows))


def solve_within_wald(varw_r, varw_s, m_r, m_s):
    """Solve the within variance ratio of two group sizes for lambda

    With varw = E[y_dot' y_dot / (m - 1)], the equation is

        ((m_r - 1 + lam) / (m_s - 1 + lam))^2
            = ((m_r - 1) / (m_s - 1))^2 varw_s / varw_r

    whose left side is monotone in lam.

    Raises
    ------
    OutOfRangeError
        when no root lies in (-1, 1)

    """

    if m_r == m_s:
        module_logger.error("solve_within_wald() with equal sizes")
        raise DomainError("the group sizes must differ")

    if not (varw_r > 0 and varw_s > 0):
        module_logger.error("solve_within_wald() with non positive variance")
        raise DomainError("variances must be positive")

    k_r = m_r - 1.0
    k_s = m_s - 1.0
    target = k_r / k_s * np.sqrt(varw_s / varw_r)

    def h(lam):
        return (k_r + lam) / (k_s + lam) - target

    lo, hi = -1 + 1e-12, 1 - 1e-12
    if np.sign(h(lo)) == np.sign(h(hi)):
        module_logger.error("within variance ratio without admissible root")
        raise OutOfRangeError("no lambda in (-1, 1) solves the ratio")

    return scipy.optimize.brentq(h, lo, hi, xtol=1e-14, rtol=1e-15)
