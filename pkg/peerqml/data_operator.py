"""Module to assemble and prepare grouped data for the other modules

"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    CategoryError,
    DimensionError,
    DomainError,
    ParseError,
    SingletonGroupError,
)

module_logger = logging.getLogger("peerqml.data_operator")
module_logger.debug("loading data_operator")

DEFAULT_MAX_GROUP_SIZE = 100
X3_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Schema:
    """Column mapping of a long-format table

    Parameters
    ----------
    group, category, y : str
        names of the group id, category and outcome columns

    x1 : tuple of str
        individual characteristics entering directly

    x2 : tuple of str
        individual characteristics entering as leave-out means

    x3 : tuple of str
        group characteristics, constant within each group

    """

    group: str = "group"
    category: str = "category"
    y: str = "y"
    x1: tuple = ()
    x2: tuple = ()
    x3: tuple = ()

    @classmethod
    def infer(cls, columns):
        """Collect the x1_*, x2_* and x3_* columns of a table"""

        columns = list(columns)

        return cls(
            x1=tuple(c for c in columns if c.startswith("x1_")),
            x2=tuple(c for c in columns if c.startswith("x2_")),
            x3=tuple(c for c in columns if c.startswith("x3_")),
        )

    @property
    def required(self):
        return (self.group, self.category, self.y) + (
            self.x1 + self.x2 + self.x3
        )

    @property
    def z_names(self):
        return (
            ["const"]
            + list(self.x1)
            + [f"{c}_loo" for c in self.x2]
            + list(self.x3)
        )


def leave_out_mean(x):
    """Average over the group excluding each member (divisor m - 1)"""

    x = np.asarray(x, dtype=float)
    m = x.shape[0]

    return (x.sum(axis=0) - x) / (m - 1)


@dataclass(frozen=True, eq=False)
class GroupData:
    """Observations of a single group

    Parameters
    ----------
    id : str
        group identifier

    category : int
        category label in 1..J

    y : np.ndarray
        outcomes, length m

    z : np.ndarray
        regressors, m x k_Z, rows (1, x1, leave-out mean of x2, x3)

    x1, x2, x3 : np.ndarray
        raw characteristics (m x k1, m x k2, m x k3) as read

    """

    id: str
    category: int
    y: np.ndarray
    z: np.ndarray
    x1: np.ndarray = field(default=None)
    x2: np.ndarray = field(default=None)
    x3: np.ndarray = field(default=None)

    def __post_init__(self):

        if self.y.ndim != 1 or self.z.ndim != 2:
            raise DimensionError("y must be a vector and z a matrix")

        if self.z.shape[0] != self.y.shape[0]:
            module_logger.error(f"group {self.id}: y and z lengths differ")
            raise DimensionError("y and z must have the same rows")

        if self.y.shape[0] < 2:
            module_logger.error(f"group {self.id} has a single member")
            raise SingletonGroupError(f"group {self.id} has m=1")

    @property
    def m(self):
        return self.y.shape[0]

    @classmethod
    def from_characteristics(cls, id, category, y, x1=None, x2=None, x3=None):
        """Build z = (1, x1, leave-out mean of x2, x3) for one group"""

        y = np.asarray(y, dtype=float)
        m = y.shape[0]

        if m < 2:
            module_logger.error(f"group {id} has a single member")
            raise SingletonGroupError(f"group {id} has m=1")

        def as_matrix(x):
            if x is None:
                return np.empty((m, 0))
            x = np.asarray(x, dtype=float)
            if x.ndim == 2:
                return x
            if x.size == 0:
                return np.empty((m, 0))
            return x.reshape(m, -1)

        x1, x2, x3 = as_matrix(x1), as_matrix(x2), as_matrix(x3)
        z = np.column_stack([np.ones(m), x1, leave_out_mean(x2), x3])

        return cls(
            id=str(id), category=int(category), y=y, z=z, x1=x1, x2=x2, x3=x3
        )


@dataclass(frozen=True, eq=False)
class WithinBetween:
    """Within deviations and group means of one group"""

    y_dot: np.ndarray
    y_bar: float
    z_dot: np.ndarray
    z_bar: np.ndarray


def within_between(g):
    """Split a group into within deviations and group means

    Parameters
    ----------
    g : GroupData
        a single group

    Returns
    -------
    WithinBetween
        y_dot = y - y_bar, z_dot = z - z_bar

    """

    y_bar = g.y.mean()
    z_bar = g.z.mean(axis=0)

    return WithinBetween(
        y_dot=g.y - y_bar, y_bar=y_bar, z_dot=g.z - z_bar, z_bar=z_bar
    )


@dataclass(frozen=True, eq=False)
class GroupStats:
    """Per group sufficient statistics of the likelihood

    Arrays are indexed by group r = 0..R-1.

    """

    m: np.ndarray
    category: np.ndarray
    yy_within: np.ndarray
    y_bar: np.ndarray
    zy_within: np.ndarray
    zz_within: np.ndarray
    z_bar: np.ndarray

    @classmethod
    def from_groups(cls, groups):

        sizes = np.array([g.m for g in groups])
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

        y = np.concatenate([g.y for g in groups])
        z = np.concatenate([g.z for g in groups])

        y_bar = np.add.reduceat(y, starts) / sizes
        z_bar = np.add.reduceat(z, starts, axis=0) / sizes[:, None]

        y_dot = y - np.repeat(y_bar, sizes)
        z_dot = z - np.repeat(z_bar, sizes, axis=0)

        return cls(
            m=sizes.astype(float),
            category=np.array([g.category for g in groups]),
            yy_within=np.add.reduceat(y_dot * y_dot, starts),
            y_bar=y_bar,
            zy_within=np.add.reduceat(z_dot * y_dot[:, None], starts, axis=0),
            zz_within=np.add.reduceat(
                np.einsum("ni,nj->nij", z_dot, z_dot), starts, axis=0
            ),
            z_bar=z_bar,
        )


class Dataset:
    """Grouped observations

    Parameters
    ----------
    groups : list of GroupData
        the groups, all with the same number of regressors

    J : int, optional
        number of categories, defaults to the largest label

    schema : Schema, optional
        column names of the raw characteristics, defaults to
        x1_1, x2_1, ... following the widths of the groups

    max_group_size : int
        upper bound for the group sizes

    """

    def __init__(
        self,
        groups,
        J=None,
        schema=None,
        max_group_size=DEFAULT_MAX_GROUP_SIZE,
    ):

        self.logger = logging.getLogger("peerqml.data_operator.Dataset")
        self.logger.info("creating an instance of Dataset")

        if bool(groups) is False:
            self.logger.error("a Dataset needs at least one group")
            raise ParseError("empty dataset")

        self.groups = tuple(groups)
        k_z = {g.z.shape[1] for g in self.groups}
        if len(k_z) != 1:
            self.logger.error("groups with different numbers of regressors")
            raise DimensionError("all groups must share k_Z")

        categories = np.array([g.category for g in self.groups])
        self.J = int(categories.max()) if J is None else int(J)
        if categories.min() < 1 or categories.max() > self.J:
            self.logger.error(f"category labels outside 1..{self.J}")
            raise CategoryError(f"categories must lie in 1..{self.J}")

        missing = set(range(1, self.J + 1)) - set(categories.tolist())
        if missing:
            self.logger.error(f"categories without groups: {sorted(missing)}")
            raise CategoryError(
                f"every category needs a group, missing {sorted(missing)}"
            )

        self.max_group_size = int(max_group_size)
        largest = max(g.m for g in self.groups)
        if largest > self.max_group_size:
            self.logger.error(f"group of size {largest} above the bound")
            raise DomainError(
                f"group size {largest} exceeds {self.max_group_size}"
            )

        self.k_z = k_z.pop()
        self.schema = self._default_schema() if schema is None else schema
        self.z_names = self.schema.z_names
        if len(self.z_names) != self.k_z:
            self.logger.error("schema does not match the regressors")
            raise DimensionError(
                f"{len(self.z_names)} names for {self.k_z} regressors"
            )

        self.stats = GroupStats.from_groups(self.groups)

    @property
    def R(self):
        return len(self.groups)

    @property
    def N(self):
        return int(self.stats.m.sum())

    def _default_schema(self):

        first = self.groups[0]
        names = {}
        for kind in ("x1", "x2", "x3"):
            values = getattr(first, kind)
            width = 0 if values is None else values.shape[1]
            names[kind] = tuple(f"{kind}_{i + 1}" for i in range(width))

        return Schema(**names)

    def to_frame(self):
        """Long format table with one row per individual"""

        frames = []
        for g in self.groups:
            columns = {
                self.schema.group: [g.id] * g.m,
                self.schema.category: [g.category] * g.m,
                self.schema.y: g.y,
            }
            for kind in ("x1", "x2", "x3"):
                values = getattr(g, kind)
                for i, name in enumerate(getattr(self.schema, kind)):
                    columns[name] = values[:, i]
            frames.append(pd.DataFrame(columns))

        return pd.concat(frames, ignore_index=True)


def build_dataset(
    rows, schema=None, J=None, max_group_size=DEFAULT_MAX_GROUP_SIZE
):
    """Assemble a Dataset from a long-format table

    Groups are ordered by id and the members of a group are
    sorted by (y, x1, x2, x3), so the result does not depend
    on the row order of the input.

    Parameters
    ----------
    rows : pd.DataFrame
        one row per individual

    schema : Schema, optional
        column mapping, inferred from the column names if omitted

    J : int, optional
        number of categories

    max_group_size : int
        largest admissible group

    Returns
    -------
    Dataset

    Examples
    --------
    >>> rows = pd.DataFrame({"group": ["a", "a"], "category": [1, 1],
    ...                      "y": [1.0, 2.0], "x2_1": [3.0, 5.0]})
    >>> build_dataset(rows).groups[0].z[:, 1]
    array([5., 3.])

    """

    if not isinstance(rows, pd.DataFrame):
        module_logger.error("wrong data type: expecting a pd.DataFrame")
        raise TypeError

    if schema is None:
        schema = Schema.infer(rows.columns)

    missing = [c for c in schema.required if c not in rows.columns]
    if missing:
        module_logger.error(f"missing columns: {missing}")
        raise ParseError(f"missing columns {missing}")

    table = rows[list(schema.required)].reset_index(drop=True)
    if table.isna().any().any():
        bad = table.columns[table.isna().any()].tolist()
        module_logger.error(f"missing values in {bad}")
        raise ParseError(f"missing values in columns {bad}")

    try:
        numeric = table.drop(columns=[schema.group]).astype(float)
    except ValueError as err:
        module_logger.error("non numeric values in the table")
        raise ParseError(str(err)) from err

    category = numeric[schema.category]
    if (category != np.round(category)).any():
        raise CategoryError("category labels must be integers")

    ids = table[schema.group].astype(str)
    groups = []
    for gid, index in sorted(ids.groupby(ids).groups.items()):
        block = numeric.loc[index]

        if block[schema.category].nunique() != 1:
            module_logger.error(f"group {gid} has several categories")
            raise CategoryError(f"group {gid} mixes categories")

        if len(block) < 2:
            module_logger.error(f"group {gid} has a single member")
            raise SingletonGroupError(f"group {gid} has m=1")

        columns = [schema.y] + list(schema.x1 + schema.x2 + schema.x3)
        values = block[columns].to_numpy()
        # lexsort keys run from last (primary) to first
        values = values[np.lexsort(values.T[::-1])]

        k1, k2 = len(schema.x1), len(schema.x2)
        x1 = values[:, 1 : 1 + k1]
        x2 = values[:, 1 + k1 : 1 + k1 + k2]
        x3 = values[:, 1 + k1 + k2 :]

        if x3.size and np.ptp(x3, axis=0).max() > X3_TOLERANCE:
            module_logger.error(f"group {gid}: x3 varies within the group")
            raise ParseError(f"x3 columns must be constant in group {gid}")

        groups.append(
            GroupData.from_characteristics(
                gid,
                int(block[schema.category].iloc[0]),
                values[:, 0],
                x1,
                x2,
                x3,
            )
        )

    return Dataset(
        groups,
        J=J,
        schema=schema,
        max_group_size=max_group_size,
    )


@dataclass
class IdentReport:
    """Outcome of the identification check

    Parameters
    ----------
    sizes_by_category : pd.DataFrame
        number of groups R_{m,j}, index group size, columns category

    scenario_a : bool
        some category holds groups of two different sizes

    scenario_b : bool
        some size appears in two different categories

    """

    sizes_by_category: pd.DataFrame
    scenario_a: bool
    scenario_b: bool
    J: int
    notes: list = field(default_factory=list)

    @property
    def identified(self):
        return self.scenario_a or (self.scenario_b and self.J >= 2)

    def to_dict(self):

        table = {
            str(int(m)): {
                str(int(j)): int(n) for j, n in row.items() if n > 0
            }
            for m, row in self.sizes_by_category.iterrows()
        }

        return {
            "sizes_by_category": table,
            "scenario_a": bool(self.scenario_a),
            "scenario_b": bool(self.scenario_b),
            "identified": bool(self.identified),
            "notes": list(self.notes),
        }


def check_identification(d):
    """Check the size and category variation needed for identification

    Parameters
    ----------
    d : Dataset

    Returns
    -------
    IdentReport

    """

    if not isinstance(d, Dataset):
        module_logger.error("wrong data type: expecting a Dataset")
        raise TypeError

    frame = pd.DataFrame(
        {"m": d.stats.m.astype(int), "category": d.stats.category}
    )
    table = pd.crosstab(frame["m"], frame["category"]).reindex(
        columns=range(1, d.J + 1), fill_value=0
    )

    present = table > 0
    scenario_a = bool((present.sum(axis=0) >= 2).any())
    scenario_b = bool((present.sum(axis=1) >= 2).any())

    notes = []
    if scenario_a:
        notes.append("group sizes vary within a category")
    if scenario_b:
        notes.append(
            "a group size is shared by two categories; identification "
            "through it is conditional on category variances differing"
        )
    if not (scenario_a or scenario_b):
        notes.append(
            "no size variation within categories and no size "
            "shared across categories"
        )

    report = IdentReport(
        sizes_by_category=table,
        scenario_a=scenario_a,
        scenario_b=scenario_b,
        J=d.J,
        notes=notes,
    )
    module_logger.info(f"identification check: {report.identified}")

    return report
