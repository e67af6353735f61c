"""
Shared readers/writers for the delimited-text tables and JSON documents.

Tables are CSV files preceded by ``# key: value`` metadata lines; the first
one is always ``# schema: <name> v<version>``. JSON documents are validated
with their pydantic schema. Parse failures raise ``MalformedFileError`` with
the offending line (and column where known).
"""

import json
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from errors import MalformedFileError, MissingInputError
from models.schemas import SCHEMA_VERSION

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DocT = TypeVar("DocT", bound=BaseModel)

_MISSING_TOKENS = {"", "nan", "NaN"}


def schema_header(name: str) -> str:
    return f"{name} v{SCHEMA_VERSION}"


def write_table(path: PathLike, frame: pd.DataFrame, schema: str, meta: Optional[Dict[str, object]] = None) -> Path:
    """
    Write ``frame`` as CSV with a schema line and optional metadata lines.

    Output is byte-stable for identical inputs (no timestamps, fixed newline).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema_header(schema)}\n")
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        frame.to_csv(fh, index=False, lineterminator="\n", na_rep="")
    return path


def read_table(
    path: PathLike,
    what: str,
    required: Iterable[str] = (),
    numeric: Iterable[str] = (),
) -> Tuple[Dict[str, str], pd.DataFrame]:
    """
    Read a table written by ``write_table``.

    Args:
        path: File to read
        what: Human-readable file kind for diagnostics
        required: Columns that must be present
        numeric: Columns converted to float (empty cells become NaN)

    Returns:
        Tuple (metadata dict, DataFrame)

    Raises:
        MissingInputError: If the file does not exist
        MalformedFileError: On parse errors, missing columns or non-numeric cells
    """
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(str(path), what)
    meta: Dict[str, str] = {}
    n_header = 0
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
            n_header += 1
    try:
        frame = pd.read_csv(path, skiprows=n_header, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise MalformedFileError(str(path), "no header row", n_header + 1)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = n_header + int(match.group(1)) if match else None
        raise MalformedFileError(str(path), "inconsistent number of fields", line)

    columns = list(frame.columns)
    for col in required:
        if col not in columns:
            raise MalformedFileError(str(path), f"missing column '{col}'", n_header + 1)
    for col in numeric:
        if col not in columns:
            continue
        raw = frame[col].str.strip()
        values = pd.to_numeric(raw.where(~raw.isin(_MISSING_TOKENS), None), errors="coerce")
        bad = values.isna() & ~raw.isin(_MISSING_TOKENS)
        if bad.any():
            row = int(bad.to_numpy().nonzero()[0][0])
            raise MalformedFileError(
                str(path),
                f"non-numeric value {raw.iloc[row]!r} in column '{col}'",
                n_header + 2 + row,
                columns.index(col) + 1,
            )
        frame[col] = values.astype(float)
    return meta, frame


def load_document(path: PathLike, schema: Type[DocT], what: str) -> DocT:
    """Parse and validate a JSON document against its pydantic schema."""
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(str(path), what)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedFileError(str(path), e.msg, e.lineno, e.colno)
    try:
        return schema.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise MalformedFileError(str(path), f"{location}: {first['msg']}")


def save_document(document: BaseModel, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n")
    return path
