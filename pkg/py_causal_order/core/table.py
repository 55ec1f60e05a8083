import csv
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from loguru import logger
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    TypeAdapter,
    ValidationError,
    field_validator,
    model_validator,
)

from py_causal_order.core.errors import DataError

MISSING_TOKEN = "unknown"
MISSING_RENDERING = "Unknown"
FIELD_SEPARATOR = ", "
TEXT_TOKEN_THRESHOLD = 3.0


class TableStructureError(DataError): ...


class TableSchemaError(DataError): ...


class OrderingError(DataError): ...


class ColumnKind(str, Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"
    TEXT = "text"


class CellTag(str, Enum):
    NUMBER = "number"
    CATEGORY = "category"
    TEXT = "text"
    MISSING = "missing"


_KIND_TAGS: dict[ColumnKind, CellTag] = {
    ColumnKind.NUMERICAL: CellTag.NUMBER,
    ColumnKind.CATEGORICAL: CellTag.CATEGORY,
    ColumnKind.TEXT: CellTag.TEXT,
}


def format_number(value: float) -> str:
    """
    Shortest round-trip decimal form with a '.' separator; integral values drop the fraction.
    Example:
        - 30.0 -> '30'
        - 0.1 -> '0.1'
    """
    if value.is_integer() and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def placeholder_name(position: int) -> str:
    """
    Spreadsheet-style placeholder for a column without a name: 0 -> 'A', 25 -> 'Z', 26 -> 'AA'.
    """
    remaining = position + 1
    name = ""
    while remaining > 0:
        remaining, offset = divmod(remaining - 1, 26)
        name = chr(ord("A") + offset) + name
    return name


def is_missing_token(raw: str) -> bool:
    stripped = raw.strip()
    return len(stripped) == 0 or stripped.lower() == MISSING_TOKEN


def parse_number(raw: str) -> Optional[float]:
    try:
        value = float(raw)
    except ValueError:
        return None
    if not math.isfinite(value):
        return None
    return value


class ColumnSpec(BaseModel):
    """
    A single column of a table:
    - `name`: unique within its table.
    - `kind`: numerical, categorical or free text.
    - `index`: 0-based position of the column in the raw file it was read from.
    """

    model_config = ConfigDict(frozen=True)
    name: str
    kind: ColumnKind
    index: int = Field(ge=0)


class Cell(BaseModel):
    model_config = ConfigDict(frozen=True)
    tag: CellTag
    value: Union[float, str, None] = None

    @model_validator(mode="after")
    def _check_value_matches_tag(self) -> "Cell":
        match self.tag:
            case CellTag.MISSING:
                if self.value is not None:
                    raise TableSchemaError(f"A missing cell cannot hold a value: {self.value!r}")
            case CellTag.NUMBER:
                if not isinstance(self.value, float) or not math.isfinite(self.value):
                    raise TableSchemaError(f"A number cell needs a finite float, got {self.value!r}")
            case _:
                if not isinstance(self.value, str):
                    raise TableSchemaError(f"A {self.tag.value} cell needs text, got {self.value!r}")
        return self

    @classmethod
    def missing(cls) -> "Cell":
        return cls(tag=CellTag.MISSING)

    @classmethod
    def from_value(cls, value: Any, kind: ColumnKind) -> "Cell":
        if value is None:
            return cls.missing()
        if kind is ColumnKind.NUMERICAL:
            return cls(tag=CellTag.NUMBER, value=float(value))
        return cls(tag=_KIND_TAGS[kind], value=str(value))

    @property
    def is_missing(self) -> bool:
        return self.tag is CellTag.MISSING

    def render(self) -> str:
        match self.tag:
            case CellTag.MISSING:
                return MISSING_RENDERING
            case CellTag.NUMBER:
                return format_number(float(self.value))  # type: ignore[arg-type]
            case _:
                return str(self.value)


Sample = tuple[Cell, ...]


class Table(BaseModel):
    """
    Mixed-type tabular data: an ordered list of column specs and rows of cells, one cell per column.
    Every cell either carries the tag of its column's kind or is missing.
    """

    model_config = ConfigDict(frozen=True)
    columns: tuple[ColumnSpec, ...]
    rows: tuple[tuple[Cell, ...], ...] = ()

    @model_validator(mode="after")
    def _check_shape(self) -> "Table":
        if len(self.columns) == 0:
            raise TableSchemaError("A table needs at least one column")
        names = [column.name for column in self.columns]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if len(duplicates) > 0:
            raise TableSchemaError(f"Duplicate column names: {duplicates}")

        for row_number, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise TableStructureError(
                    f"Row {row_number} has {len(row)} cells, expected {len(self.columns)}"
                )
            for column, cell in zip(self.columns, row):
                if not cell.is_missing and cell.tag is not _KIND_TAGS[column.kind]:
                    raise TableSchemaError(
                        f"Row {row_number}, column {column.name!r}: {cell.tag.value} cell in a {column.kind.value} column"
                    )
        return self

    @classmethod
    def from_values(
        cls, columns: Sequence[ColumnSpec], rows: Iterable[Sequence[Any]]
    ) -> "Table":
        cells: list[tuple[Cell, ...]] = []
        for row_number, row in enumerate(rows):
            if len(row) != len(columns):
                raise TableStructureError(
                    f"Row {row_number} has {len(row)} values, expected {len(columns)}"
                )
            cells.append(tuple(Cell.from_value(value, column.kind) for column, value in zip(columns, row)))
        return cls(columns=tuple(columns), rows=tuple(cells))

    @property
    def d(self) -> int:
        return len(self.columns)

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def column_names(self) -> list[str]:
        return [column.name for column in self.columns]

    def column_position(self, name: str) -> int:
        for position, column in enumerate(self.columns):
            if column.name == name:
                return position
        raise TableSchemaError(f"Unknown column: {name!r}")

    def select_rows(self, row_indices: Iterable[int]) -> "Table":
        return Table(columns=self.columns, rows=tuple(self.rows[index] for index in row_indices))


class Ordering(BaseModel):
    """
    A column ordering, stored as the rank (1..d) of every column position.
    Example:
        - Ordering(ranks=(2, 1, 3)) serializes column 1 first, then column 0, then column 2.
    """

    model_config = ConfigDict(frozen=True)
    ranks: tuple[int, ...]

    @field_validator("ranks")
    @classmethod
    def _check_permutation(cls, ranks: tuple[int, ...]) -> tuple[int, ...]:
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise OrderingError(f"Ranks {list(ranks)} are not a permutation of 1..{len(ranks)}")
        return ranks

    @classmethod
    def identity(cls, d: int) -> "Ordering":
        return cls(ranks=tuple(range(1, d + 1)))

    @classmethod
    def from_sequence(cls, sequence: Sequence[int]) -> "Ordering":
        """Build an ordering from the column positions listed in serialization order."""
        ranks = [0] * len(sequence)
        for rank, column in enumerate(sequence, start=1):
            if not 0 <= column < len(sequence):
                raise OrderingError(f"Column {column} out of range for {len(sequence)} columns")
            ranks[column] = rank
        return cls(ranks=tuple(ranks))

    @property
    def d(self) -> int:
        return len(self.ranks)

    @property
    def sequence(self) -> tuple[int, ...]:
        """Column positions in serialization order."""
        sequence = [0] * len(self.ranks)
        for column, rank in enumerate(self.ranks):
            sequence[rank - 1] = column
        return tuple(sequence)

    def reversed(self) -> "Ordering":
        d = len(self.ranks)
        return Ordering(ranks=tuple(d + 1 - rank for rank in self.ranks))

    def inverse(self) -> "Ordering":
        return Ordering(ranks=tuple(column + 1 for column in self.sequence))

    def compose(self, other: "Ordering") -> "Ordering":
        """`self ∘ other` on 1..d, i.e. x -> self(other(x))."""
        if other.d != self.d:
            raise OrderingError(f"Cannot compose orderings of size {self.d} and {other.d}")
        return Ordering(ranks=tuple(self.ranks[rank - 1] for rank in other.ranks))


def serialize_with_spans(
    sample: Sample, table: Table, ordering: Ordering
) -> tuple[str, list[tuple[int, int, int]]]:
    """
    Serialize a sample as `name is value` fragments joined by ', ' in ordering rank, and return
    the UTF-8 byte span `(column, start, end)` of every column's value inside the text.
    """
    if ordering.d != table.d or len(sample) != table.d:
        raise OrderingError(
            f"Ordering over {ordering.d} columns cannot serialize a {len(sample)}-cell sample of a {table.d}-column table"
        )
    separator_bytes = len(FIELD_SEPARATOR.encode("utf-8"))
    fragments: list[str] = []
    spans: list[tuple[int, int, int]] = []
    offset = 0
    for position, column in enumerate(ordering.sequence):
        if position > 0:
            offset += separator_bytes
        prefix = f"{table.columns[column].name} is "
        value = sample[column].render()
        start = offset + len(prefix.encode("utf-8"))
        end = start + len(value.encode("utf-8"))
        fragments.append(prefix + value)
        spans.append((column, start, end))
        offset = end
    return FIELD_SEPARATOR.join(fragments), spans


def serialize(sample: Sample, table: Table, ordering: Ordering) -> str:
    """
    Example:
        - (age=30, job='nurse'), identity ordering -> 'age is 30, job is nurse'
    """
    text, _ = serialize_with_spans(sample, table, ordering)
    return text


_SCHEMA_ADAPTER = TypeAdapter(list[ColumnSpec])


def _validate_schema(schema: Sequence[Union[ColumnSpec, dict[str, Any]]]) -> list[ColumnSpec]:
    try:
        return _SCHEMA_ADAPTER.validate_python(
            [spec.model_dump() if isinstance(spec, ColumnSpec) else spec for spec in schema]
        )
    except ValidationError as error:
        raise TableSchemaError(f"Invalid column schema: {error}") from error


def load_schema(path: Union[str, Path]) -> list[ColumnSpec]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise TableSchemaError(f"Schema file {path} is not valid JSON: {error}") from error
    if not isinstance(raw, list):
        raise TableSchemaError(f"Schema file {path} must hold a list of column specs")
    return _validate_schema(raw)


def _read_raw_rows(path: Union[str, Path], delimiter: str) -> list[tuple[int, list[str]]]:
    """
    (line number, raw fields) per non-blank record; the line number is where the record ends in the
    file. Every record must have as many fields as the first one.
    """
    try:
        with Path(path).open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle, delimiter=delimiter)
            records = [(reader.line_num, record) for record in reader if len(record) > 0]
    except csv.Error as error:
        raise TableStructureError(f"Malformed delimited file {path}: {error}") from error

    if len(records) == 0:
        return []
    width = len(records[0][1])
    for line_number, record in records:
        if len(record) != width:
            raise TableStructureError(
                f"Ragged row in {path}: line {line_number} has {len(record)} fields, expected {width}"
            )
    return records


def _detect_header(raw_rows: list[list[str]], specs: Optional[list[ColumnSpec]], path: Union[str, Path]) -> bool:
    first = raw_rows[0]
    if specs is not None:
        return all(first[spec.index].strip() == spec.name for spec in specs if spec.index < len(first))

    if any(is_missing_token(value) or parse_number(value.strip()) is not None for value in first):
        return False
    if len({value.strip() for value in first}) != len(first):
        return False
    body = raw_rows[1:]
    for position in range(len(first)):
        column_values = [row[position] for row in body if not is_missing_token(row[position])]
        if len(column_values) > 0 and all(parse_number(value.strip()) is not None for value in column_values):
            return True
    # no numeric column to compare against: a header row and a data row look alike
    logger.warning(
        f"[TABLE LOAD] Cannot tell whether the first row of {path} is a header (no numeric column); "
        "reading it as data. Pass has_header=True (--has-header) if it holds column names"
    )
    return False


def infer_kind(raw_values: Iterable[str]) -> ColumnKind:
    present = [value.strip() for value in raw_values if not is_missing_token(value)]
    if len(present) == 0:
        return ColumnKind.CATEGORICAL
    if all(parse_number(value) is not None for value in present):
        return ColumnKind.NUMERICAL
    mean_tokens = sum(len(value.split()) for value in present) / len(present)
    if mean_tokens > TEXT_TOKEN_THRESHOLD:
        return ColumnKind.TEXT
    return ColumnKind.CATEGORICAL


def _parse_cell(raw: str, spec: ColumnSpec, line_number: int) -> Cell:
    if is_missing_token(raw):
        return Cell.missing()
    stripped = raw.strip()
    match spec.kind:
        case ColumnKind.NUMERICAL:
            number = parse_number(stripped)
            if number is None:
                raise TableSchemaError(
                    f"Line {line_number}, column {spec.name!r}: {raw!r} is not a finite number"
                )
            return Cell(tag=CellTag.NUMBER, value=number)
        case ColumnKind.CATEGORICAL:
            return Cell(tag=CellTag.CATEGORY, value=stripped)
        case ColumnKind.TEXT:
            return Cell(tag=CellTag.TEXT, value=stripped)


def load_table(
    path: Union[str, Path],
    schema: Optional[Sequence[Union[ColumnSpec, dict[str, Any]]]] = None,
    delimiter: str = ",",
    has_header: Optional[bool] = None,
) -> Table:
    """
    Read a delimiter-separated file into a `Table`.

    - Without a header row, columns are named 'A', 'B', ..., 'Z', 'AA', ...
    - Empty cells and the token 'unknown' (any case, surrounding whitespace ignored) become missing.
    - Without a schema, column kinds are inferred from the values.
    - `has_header=None` detects the header row: the first row is a header when its values are distinct
      non-numbers standing over at least one all-numeric column. Otherwise it is read as data.
    """
    specs = _validate_schema(schema) if schema is not None else None
    records = _read_raw_rows(path, delimiter)
    if len(records) == 0:
        raise TableStructureError(f"{path} holds no rows")
    raw_rows = [record for _, record in records]
    width = len(raw_rows[0])

    if has_header is None:
        has_header = _detect_header(raw_rows, specs, path)
        logger.debug(f"[TABLE LOAD] Header row detected for {path}: {has_header}")
    header = raw_rows[0] if has_header else None
    body_records = records[1:] if has_header else records
    body = [record for _, record in body_records]

    if specs is None:
        specs = [
            ColumnSpec(
                name=header[position].strip() if header and header[position].strip() else placeholder_name(position),
                kind=infer_kind(row[position] for row in body),
                index=position,
            )
            for position in range(width)
        ]
    else:
        out_of_range = [spec.name for spec in specs if spec.index >= width]
        if len(out_of_range) > 0:
            raise TableSchemaError(
                f"Schema columns {out_of_range} point past the {width} fields of {path}"
            )

    rows = tuple(
        tuple(_parse_cell(row[spec.index], spec, line_number) for spec in specs)
        for line_number, row in body_records
    )
    table = Table(columns=tuple(specs), rows=rows)
    logger.info(
        f"[TABLE LOAD] Loaded {path}: {table.m} rows, columns: {', '.join(f'{c.name}:{c.kind.value}' for c in table.columns)}"
    )
    return table
