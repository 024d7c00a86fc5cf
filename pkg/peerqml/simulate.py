"""Simulation of grouped data from the peer effects model

Random numbers come from numpy's Philox counter based generator.
The key is derived from the seed with a SeedSequence, counter
word 3 selects the purpose of the stream (design, covariates or
shocks) and counter word 2 the group, so each group has its own
substream and changing R does not perturb the earlier groups.

"""

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data_operator import (
    DEFAULT_MAX_GROUP_SIZE,
    Dataset,
    GroupData,
    Schema,
    leave_out_mean,
)
from .errors import ConfigError
from .likelihood import Delta, Theta

module_logger = logging.getLogger("peerqml.simulate")
module_logger.debug("loading simulate")

DESIGN_STREAM = 0
COVARIATE_STREAM = 1
SHOCK_STREAM = 2

SKEW_NORMAL_DELTA = 0.9
STUDENT_T_DF = 6

X_MODES = ("x1_neq_x2", "x1_eq_x2")


def substream(seed, purpose, index=0):
    """Independent generator for a (seed, purpose, group) triple

    Parameters
    ----------
    seed : int
        64-bit seed

    purpose : int
        DESIGN_STREAM, COVARIATE_STREAM or SHOCK_STREAM

    index : int
        group index

    Returns
    -------
    np.random.Generator

    """

    key = np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)
    counter = np.array([0, 0, index, purpose], dtype=np.uint64)

    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def derive_seed(master_seed, k):
    """Seed of replication k"""

    state = np.random.SeedSequence(int(master_seed), spawn_key=(int(k),))

    return int(state.generate_state(1, np.uint64)[0])


def draw_normal(n, rng):
    return rng.standard_normal(n)


def draw_skew_normal(n, rng):
    """Skew normal draws standardized to mean 0 and variance 1

    X = delta |Z1| + sqrt(1 - delta^2) Z2 with delta = 0.9, centered
    and scaled with its exact mean and variance.

    """

    delta = SKEW_NORMAL_DELTA
    z = rng.standard_normal((2, n))
    x = delta * np.abs(z[0]) + np.sqrt(1 - delta**2) * z[1]

    mean = delta * np.sqrt(2 / np.pi)
    variance = 1 - 2 * delta**2 / np.pi

    return (x - mean) / np.sqrt(variance)


def draw_student_t6(n, rng):
    """Student t draws with 6 degrees of freedom and unit variance"""

    scale = np.sqrt(STUDENT_T_DF / (STUDENT_T_DF - 2))

    return rng.standard_t(STUDENT_T_DF, n) / scale


ERROR_DISTRIBUTIONS = {
    "normal": draw_normal,
    "skew_normal": draw_skew_normal,
    "student_t6": draw_student_t6,
}


def _check_keys(values, cls, path):

    if not isinstance(values, dict):
        raise ConfigError(path, "expecting an object")

    known = {f.name for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")


@dataclass(frozen=True)
class SizeDistribution:
    """Distribution of the group sizes

    ``uniform_discrete`` draws m uniformly on {lo, ..., hi} and
    ``fixed`` sets every group to m.

    """

    kind: str = "uniform_discrete"
    lo: int = 2
    hi: int = 6
    m: int = 4

    def __post_init__(self):

        path = "design.size_dist"
        if self.kind == "uniform_discrete":
            if not 2 <= self.lo <= self.hi <= DEFAULT_MAX_GROUP_SIZE:
                raise ConfigError(
                    f"{path}.lo",
                    f"need 2 <= lo <= hi <= {DEFAULT_MAX_GROUP_SIZE}",
                )
        elif self.kind == "fixed":
            if not 2 <= self.m <= DEFAULT_MAX_GROUP_SIZE:
                raise ConfigError(f"{path}.m", "group size must be >= 2")
        else:
            raise ConfigError(f"{path}.kind", f"unknown kind {self.kind}")

    def draw(self, R, rng):

        if self.kind == "fixed":
            return np.full(R, self.m)

        return rng.integers(self.lo, self.hi, size=R, endpoint=True)

    @property
    def sizes(self):
        if self.kind == "fixed":
            return [self.m]
        return list(range(self.lo, self.hi + 1))

    @classmethod
    def from_dict(cls, values, path="design.size_dist"):
        _check_keys(values, cls, path)
        return cls(**values)

    def to_dict(self):
        if self.kind == "fixed":
            return {"kind": "fixed", "m": self.m}
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class CategoryRule:
    """Assignment of groups to variance categories

    ``random_equal_split`` shuffles the groups and deals them
    round-robin to 1..J; ``by_size`` puts groups with
    m >= threshold in category 1 and the others in category 2.

    """

    kind: str = "random_equal_split"
    threshold: int = 4

    def __post_init__(self):

        if self.kind not in ("random_equal_split", "by_size"):
            raise ConfigError(
                "design.category_rule.kind", f"unknown kind {self.kind}"
            )

    def assign(self, sizes, J, rng):

        R = sizes.shape[0]
        if self.kind == "by_size":
            return np.where(sizes >= self.threshold, 1, 2)

        categories = np.empty(R, dtype=int)
        categories[rng.permutation(R)] = np.arange(R) % J + 1

        return categories

    @classmethod
    def from_dict(cls, values, path="design.category_rule"):
        _check_keys(values, cls, path)
        return cls(**values)

    def to_dict(self):
        if self.kind == "by_size":
            return {"kind": "by_size", "threshold": self.threshold}
        return {"kind": self.kind}


@dataclass(frozen=True)
class Design:
    """Data generating process of a simulation

    Parameters
    ----------
    R : int
        number of groups

    size_dist : SizeDistribution

    J : int
        number of variance categories

    category_rule : CategoryRule

    x_mode : str
        ``x1_neq_x2`` draws x1 and x2 independently, ``x1_eq_x2``
        sets x2 = x1

    error_dist : str
        ``normal``, ``skew_normal`` or ``student_t6``, always
        standardized to the configured variances

    sigma_eps2_by_category : tuple of float

    sigma_alpha2 : float

    lam : float
        true endogenous peer effect

    beta : tuple of float, optional
        true coefficients, all ones by default

    covariates : bool
        False gives the model with an intercept only

    freeze_z : bool
        hold sizes, categories and covariates fixed across seeds,
        drawing them from z_seed

    z_seed : int

    """

    R: int = 100
    size_dist: SizeDistribution = field(default_factory=SizeDistribution)
    J: int = 1
    category_rule: CategoryRule = field(default_factory=CategoryRule)
    x_mode: str = "x1_neq_x2"
    error_dist: str = "normal"
    sigma_eps2_by_category: tuple = (1.0,)
    sigma_alpha2: float = 0.25
    lam: float = 0.5
    beta: tuple = None
    covariates: bool = True
    freeze_z: bool = False
    z_seed: int = 0

    def __post_init__(self):

        object.__setattr__(
            self,
            "sigma_eps2_by_category",
            tuple(float(s) for s in self.sigma_eps2_by_category),
        )
        if self.beta is not None:
            object.__setattr__(
                self, "beta", tuple(float(b) for b in self.beta)
            )

        if int(self.R) < 1:
            raise ConfigError("design.R", "need at least one group")
        if int(self.J) < 1:
            raise ConfigError("design.J", "need at least one category")
        if len(self.sigma_eps2_by_category) != self.J:
            raise ConfigError(
                "design.sigma_eps2_by_category", f"expecting {self.J} values"
            )
        if not all(s > 0 for s in self.sigma_eps2_by_category):
            raise ConfigError(
                "design.sigma_eps2_by_category", "variances must be positive"
            )
        if not self.sigma_alpha2 >= 0:
            raise ConfigError("design.sigma_alpha2", "must be non negative")
        if not abs(self.lam) < 1:
            raise ConfigError("design.lam", "must lie in (-1, 1)")
        if self.x_mode not in X_MODES:
            raise ConfigError("design.x_mode", f"must be one of {X_MODES}")
        if self.error_dist not in ERROR_DISTRIBUTIONS:
            raise ConfigError(
                "design.error_dist",
                f"must be one of {tuple(ERROR_DISTRIBUTIONS)}",
            )
        if self.beta is not None and len(self.beta) != self.k_z:
            raise ConfigError("design.beta", f"expecting {self.k_z} values")
        if self.category_rule.kind == "by_size" and self.J != 2:
            raise ConfigError(
                "design.category_rule.kind", "by_size needs J = 2"
            )

    @property
    def k_z(self):
        return 4 if self.covariates else 1

    @property
    def schema(self):
        if not self.covariates:
            return Schema()
        return Schema(x1=("x1_1",), x2=("x2_1",), x3=("x3_1",))

    @property
    def delta_true(self):

        beta = np.ones(self.k_z) if self.beta is None else self.beta

        return Delta(
            Theta(self.lam, self.sigma_alpha2, self.sigma_eps2_by_category),
            beta,
        )

    @classmethod
    def from_dict(cls, values, path="design"):
        """Build a Design from a configuration mapping

        A ``preset`` key names an entry of DESIGN_PRESETS whose
        values are overridden by the other keys.

        """

        if not isinstance(values, dict):
            raise ConfigError(path, "expecting an object")

        values = dict(values)
        preset = values.pop("preset", None)
        if preset is not None:
            if preset not in DESIGN_PRESETS:
                raise ConfigError(f"{path}.preset", f"unknown preset {preset}")
            values = {**DESIGN_PRESETS[preset], **values}

        known = {f.name for f in fields(cls)}
        for key in values:
            if key not in known:
                raise ConfigError(f"{path}.{key}", "unknown key")

        try:
            if "size_dist" in values:
                values["size_dist"] = SizeDistribution.from_dict(
                    values["size_dist"], f"{path}.size_dist"
                )
            if "category_rule" in values:
                values["category_rule"] = CategoryRule.from_dict(
                    values["category_rule"], f"{path}.category_rule"
                )
            return cls(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(path, str(err)) from err

    def to_dict(self):

        values = asdict(self)
        values["size_dist"] = self.size_dist.to_dict()
        values["category_rule"] = self.category_rule.to_dict()
        values["sigma_eps2_by_category"] = list(self.sigma_eps2_by_category)
        values["beta"] = None if self.beta is None else list(self.beta)

        return values


@dataclass(frozen=True, eq=False)
class SimulatedData:

    dataset: Dataset
    truth: Delta


def _regressors(m, x1, x2, x3):

    if x1 is None:
        return np.ones((m, 1))

    return np.column_stack([np.ones(m), x1, leave_out_mean(x2), x3])


def _group_outcome(z, u, lam, beta):
    """Reduced form y = (I - lam W)^-1 (z beta + u) of one group"""

    m = u.shape[0]
    k = m - 1
    v = z @ beta + u
    v_bar = v.mean()

    return k / (k + lam) * (v - v_bar) + v_bar / (1 - lam)


def gen_dataset(design, seed):
    """Draw a Dataset from a Design

    Parameters
    ----------
    design : Design

    seed : int
        64-bit seed of the shocks, and of the covariates unless
        design.freeze_z is set

    Returns
    -------
    SimulatedData

    """

    if not isinstance(design, Design):
        module_logger.error("wrong design type: expecting a Design")
        raise TypeError

    truth = design.delta_true
    theta = truth.theta
    draw = ERROR_DISTRIBUTIONS[design.error_dist]
    z_seed = design.z_seed if design.freeze_z else seed

    design_rng = substream(z_seed, DESIGN_STREAM)
    sizes = design.size_dist.draw(design.R, design_rng)
    categories = design.category_rule.assign(sizes, design.J, design_rng)

    groups = []
    for r, (m, j) in enumerate(zip(sizes, categories)):
        m = int(m)

        x1 = x2 = x3 = None
        if design.covariates:
            covariate_rng = substream(z_seed, COVARIATE_STREAM, r)
            x1 = covariate_rng.standard_normal(m)
            if design.x_mode == "x1_eq_x2":
                x2 = x1.copy()
            else:
                x2 = covariate_rng.standard_normal(m)
            x3 = np.full(m, covariate_rng.standard_normal())

        shock_rng = substream(seed, SHOCK_STREAM, r)
        alpha = np.sqrt(theta.sigma_alpha2) * draw(1, shock_rng)[0]
        eps = np.sqrt(theta.sigma_eps2[j - 1]) * draw(m, shock_rng)

        z = _regressors(m, x1, x2, x3)
        y = _group_outcome(z, alpha + eps, theta.lam, truth.beta)
        groups.append(
            GroupData.from_characteristics(f"{r + 1:06d}", j, y, x1, x2, x3)
        )

    dataset = Dataset(groups, J=design.J, schema=design.schema)
    module_logger.debug(f"simulated R={dataset.R}, N={dataset.N}")

    return SimulatedData(dataset=dataset, truth=truth)


_COMMON = {"sigma_alpha2": 0.25, "lam": 0.5}

DESIGN_PRESETS = {
    "baseline": {**_COMMON},
    "baseline_x1_eq_x2": {**_COMMON, "x_mode": "x1_eq_x2"},
    "class_size": {
        **_COMMON,
        "size_dist": {"kind": "uniform_discrete", "lo": 13, "hi": 25},
    },
    "class_size_x1_eq_x2": {
        **_COMMON,
        "size_dist": {"kind": "uniform_discrete", "lo": 13, "hi": 25},
        "x_mode": "x1_eq_x2",
    },
    "sizes_3_5": {
        **_COMMON,
        "size_dist": {"kind": "uniform_discrete", "lo": 3, "hi": 5},
        "x_mode": "x1_eq_x2",
    },
    "sizes_4_8": {
        **_COMMON,
        "size_dist": {"kind": "uniform_discrete", "lo": 4, "hi": 8},
        "x_mode": "x1_eq_x2",
    },
    "sizes_8_30": {
        **_COMMON,
        "size_dist": {"kind": "uniform_discrete", "lo": 8, "hi": 30},
        "x_mode": "x1_eq_x2",
    },
    "sizes_10_22": {
        **_COMMON,
        "size_dist": {"kind": "uniform_discrete", "lo": 10, "hi": 22},
        "x_mode": "x1_eq_x2",
    },
    "skew_normal": {
        **_COMMON,
        "x_mode": "x1_eq_x2",
        "error_dist": "skew_normal",
    },
    "student_t6": {
        **_COMMON,
        "x_mode": "x1_eq_x2",
        "error_dist": "student_t6",
    },
    "hetero_halves": {
        **_COMMON,
        "x_mode": "x1_eq_x2",
        "J": 2,
        "sigma_eps2_by_category": [0.5, 1.5],
    },
    "homo_two_categories": {
        **_COMMON,
        "x_mode": "x1_eq_x2",
        "J": 2,
        "sigma_eps2_by_category": [1.0, 1.0],
    },
    "hetero_fixed_size": {
        **_COMMON,
        "size_dist": {"kind": "fixed", "m": 4},
        "x_mode": "x1_eq_x2",
        "J": 2,
        "sigma_eps2_by_category": [0.5, 1.5],
    },
    "hetero_four_categories": {
        **_COMMON,
        "size_dist": {"kind": "fixed", "m": 4},
        "x_mode": "x1_eq_x2",
        "J": 4,
        "sigma_eps2_by_category": [0.4, 0.8, 1.2, 1.6],
    },
}


def design_preset(name, **overrides):
    """Design of a named preset, with optional overrides"""

    return Design.from_dict({"preset": name, **overrides})
