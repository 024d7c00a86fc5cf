"""Readers and writers for grouped data and results

"""

import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .data_operator import DEFAULT_MAX_GROUP_SIZE, build_dataset
from .errors import ParseError

module_logger = logging.getLogger("peerqml.io")
module_logger.debug("loading io")

OUTPUT_VERSION = "1.0"


def read_groups_csv(
    file_name, schema=None, J=None, max_group_size=DEFAULT_MAX_GROUP_SIZE
):
    """Grouped data reader

    It opens a long-format CSV file, one row per individual with
    the columns group, category, y, x1_*, x2_* and x3_*.

    Parameters
    ----------
    file_name : str
        path to the file that will be opened

    schema : Schema, optional
        column mapping, inferred from the header by default

    J : int, optional
        number of categories

    Returns
    -------
    Dataset

    """

    file_name = Path(file_name)
    if not file_name.is_file():
        module_logger.error(f"file not found: {file_name}")
        raise FileNotFoundError(file_name)

    group = "group" if schema is None else schema.group
    try:
        rows = pd.read_csv(
            file_name, dtype={group: str}, float_precision="round_trip"
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        module_logger.error(f"cannot parse {file_name}: {err}")
        raise ParseError(f"{file_name}: {err}") from err

    return build_dataset(
        rows, schema=schema, J=J, max_group_size=max_group_size
    )


def write_groups_csv(dataset, file_name):
    """Write a Dataset in the long CSV layout read by read_groups_csv"""

    dataset.to_frame().to_csv(file_name, index=False, float_format="%.17g")
    module_logger.debug(f"dataset written to {file_name}")


def to_jsonable(value):
    """Convert results into JSON types, NaN and infinities become null"""

    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}

    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]

    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())

    if isinstance(value, (bool, np.bool_)):
        return bool(value)

    if isinstance(value, (int, np.integer)):
        return int(value)

    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None

    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict(orient="list"))

    return value


def write_json(document, file_name=None):
    """Serialize a result document

    The document gets a ``spec_version`` field. Floats are written
    with their shortest round-trip representation.

    Parameters
    ----------
    document : dict

    file_name : str, optional
        written when given

    Returns
    -------
    str

    """

    text = json.dumps(
        to_jsonable({"spec_version": OUTPUT_VERSION, **document}),
        indent=2,
        allow_nan=False,
    )

    if file_name is not None:
        Path(file_name).write_text(text + "\n")
        module_logger.debug(f"json written to {file_name}")

    return text


def read_json(file_name):
    """Read a JSON document, raising ParseError on invalid content"""

    file_name = Path(file_name)
    if not file_name.is_file():
        module_logger.error(f"file not found: {file_name}")
        raise FileNotFoundError(file_name)

    try:
        return json.loads(file_name.read_text())
    except json.JSONDecodeError as err:
        module_logger.error(f"invalid json in {file_name}")
        raise ParseError(f"{file_name}: {err}") from err
