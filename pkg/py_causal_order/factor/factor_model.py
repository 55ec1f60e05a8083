import json
import re
from pathlib import Path
from typing import Iterable, NamedTuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, StrictInt, ValidationError, field_validator, model_validator

from py_causal_order.core.errors import DataError
from py_causal_order.core.table import Table


class FactorDefinitionError(DataError): ...


class FactorMappingError(DataError): ...


class FactorDomainError(DataError): ...


class FactorShapeError(DataError): ...


_INTEGER_PATTERN = re.compile(r"^[+-]?\d+$")


class FactorDef(BaseModel):
    """
    A high-level factor described by one or more table columns.
    `description` and `annotation_criteria` are informational; annotation happens outside this package.
    """

    model_config = ConfigDict(frozen=True)
    name: str
    possible_values: tuple[StrictInt, ...]
    column_based: tuple[str, ...]
    description: str = ""
    annotation_criteria: str = ""

    @field_validator("possible_values")
    @classmethod
    def _check_possible_values(cls, values: tuple[int, ...]) -> tuple[int, ...]:
        if len(values) == 0:
            raise FactorDefinitionError("possible_values must not be empty")
        if len(set(values)) != len(values):
            raise FactorDefinitionError(f"possible_values must be distinct: {list(values)}")
        return values

    @field_validator("column_based")
    @classmethod
    def _check_column_based(cls, columns: tuple[str, ...]) -> tuple[str, ...]:
        if len(columns) == 0:
            raise FactorDefinitionError("column_based must list at least one column")
        return columns


class _FactorDocumentEntry(BaseModel):
    description: str = ""
    possible_values: list[StrictInt]
    annotation_criteria: str = ""
    column_based: list[str]


class _FactorDocument(BaseModel):
    factors: dict[str, _FactorDocumentEntry]


class FactorMapping(BaseModel):
    """
    Binary k×d relation between factors (rows) and table columns (columns); entry (i, j) is 1
    iff factor i lists column j. The relation is many-to-many.
    """

    model_config = ConfigDict(frozen=True)
    factor_names: tuple[str, ...]
    column_names: tuple[str, ...]
    matrix: tuple[tuple[int, ...], ...]

    @model_validator(mode="after")
    def _check_matrix(self) -> "FactorMapping":
        if len(self.matrix) != len(self.factor_names):
            raise FactorMappingError(
                f"Mapping has {len(self.matrix)} rows for {len(self.factor_names)} factors"
            )
        for factor_name, row in zip(self.factor_names, self.matrix):
            if len(row) != len(self.column_names):
                raise FactorMappingError(
                    f"Mapping row of {factor_name!r} has {len(row)} entries for {len(self.column_names)} columns"
                )
            if any(entry not in (0, 1) for entry in row):
                raise FactorMappingError(f"Mapping row of {factor_name!r} is not binary: {list(row)}")
            if sum(row) == 0:
                raise FactorMappingError(f"Factor {factor_name!r} maps to no column")
        return self

    @classmethod
    def from_defs(cls, defs: Iterable[FactorDef], column_names: Iterable[str]) -> "FactorMapping":
        defs = list(defs)
        columns = list(column_names)
        positions = {name: position for position, name in enumerate(columns)}
        matrix: list[tuple[int, ...]] = []
        for factor in defs:
            unknown = [name for name in factor.column_based if name not in positions]
            if len(unknown) > 0:
                raise FactorMappingError(
                    f"Factor {factor.name!r} references unknown columns: {unknown}"
                )
            listed = {positions[name] for name in factor.column_based}
            matrix.append(tuple(1 if position in listed else 0 for position in range(len(columns))))
        return cls(
            factor_names=tuple(factor.name for factor in defs),
            column_names=tuple(columns),
            matrix=tuple(matrix),
        )

    @property
    def k(self) -> int:
        return len(self.factor_names)

    @property
    def d(self) -> int:
        return len(self.column_names)

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64).reshape(self.k, self.d)

    def factor_index(self, name: str) -> int:
        try:
            return self.factor_names.index(name)
        except ValueError:
            raise FactorMappingError(f"Unknown factor: {name!r}") from None

    def columns_of(self, factor: int) -> frozenset[int]:
        """M(f): the columns that describe factor `factor`."""
        return frozenset(position for position, entry in enumerate(self.matrix[factor]) if entry == 1)


class FactorValueMatrix(BaseModel):
    """Annotated factor values, one row per training sample and one column per factor."""

    model_config = ConfigDict(frozen=True)
    factor_names: tuple[str, ...]
    values: tuple[tuple[int, ...], ...]

    @model_validator(mode="after")
    def _check_width(self) -> "FactorValueMatrix":
        for row_number, row in enumerate(self.values):
            if len(row) != len(self.factor_names):
                raise FactorShapeError(
                    f"Factor value row {row_number} has {len(row)} entries for {len(self.factor_names)} factors"
                )
        return self

    @classmethod
    def from_array(cls, factor_names: Iterable[str], values: np.ndarray) -> "FactorValueMatrix":
        return cls(
            factor_names=tuple(factor_names),
            values=tuple(tuple(int(value) for value in row) for row in np.asarray(values)),
        )

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def k(self) -> int:
        return len(self.factor_names)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.int64).reshape(self.m, self.k)

    def select_rows(self, row_indices: Iterable[int]) -> "FactorValueMatrix":
        return FactorValueMatrix(
            factor_names=self.factor_names,
            values=tuple(self.values[index] for index in row_indices),
        )


class FactorModel(NamedTuple):
    defs: list[FactorDef]
    mapping: FactorMapping
    values: FactorValueMatrix


def inverse_map(mapping: FactorMapping, column: int) -> frozenset[int]:
    """
    M⁻¹(c): the factors that involve column `column`.
    Example:
        - mapping [[1,1,0],[0,1,1]], column 1 -> {0, 1}
    """
    if not 0 <= column < mapping.d:
        raise FactorMappingError(f"Column {column} out of range for {mapping.d} columns")
    return frozenset(factor for factor, row in enumerate(mapping.matrix) if row[column] == 1)


def load_factor_defs(path: Union[str, Path]) -> list[FactorDef]:
    try:
        document = _FactorDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as error:
        raise FactorDefinitionError(f"Invalid factor definitions in {path}: {error}") from error
    if len(document.factors) == 0:
        raise FactorDefinitionError(f"{path} defines no factors")
    return [
        FactorDef(
            name=name,
            possible_values=tuple(entry.possible_values),
            column_based=tuple(entry.column_based),
            description=entry.description,
            annotation_criteria=entry.annotation_criteria,
        )
        for name, entry in document.factors.items()
    ]


def save_factor_defs(defs: Iterable[FactorDef], path: Union[str, Path]) -> None:
    document = {
        "factors": {
            factor.name: {
                "description": factor.description,
                "possible_values": list(factor.possible_values),
                "annotation_criteria": factor.annotation_criteria,
                "column_based": list(factor.column_based),
            }
            for factor in defs
        }
    }
    Path(path).write_text(json.dumps(document, indent=2, ensure_ascii=False), encoding="utf-8")


def validate_factor_values(defs: list[FactorDef], values: FactorValueMatrix) -> None:
    if list(values.factor_names) != [factor.name for factor in defs]:
        raise FactorShapeError(
            f"Factor value columns {list(values.factor_names)} do not match definitions {[f.name for f in defs]}"
        )
    for factor_position, factor in enumerate(defs):
        allowed = set(factor.possible_values)
        for row_number, row in enumerate(values.values):
            if row[factor_position] not in allowed:
                raise FactorDomainError(
                    f"Row {row_number}, factor {factor.name!r}: value {row[factor_position]} not in possible_values {list(factor.possible_values)}"
                )


def load_factor_values(
    path: Union[str, Path], defs: list[FactorDef], delimiter: str = ","
) -> FactorValueMatrix:
    frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, na_filter=False)
    header = [str(name).strip() for name in frame.columns]
    missing = [factor.name for factor in defs if factor.name not in header]
    if len(missing) > 0:
        raise FactorShapeError(f"{path} has no column for factors {missing}")

    rows: list[tuple[int, ...]] = []
    for row_number, record in enumerate(frame.itertuples(index=False, name=None)):
        by_name = dict(zip(header, record))
        parsed: list[int] = []
        for factor in defs:
            raw = str(by_name[factor.name]).strip()
            if not _INTEGER_PATTERN.match(raw):
                raise FactorDomainError(
                    f"Row {row_number}, factor {factor.name!r}: {raw!r} is not an integer"
                )
            parsed.append(int(raw))
        rows.append(tuple(parsed))

    values = FactorValueMatrix(factor_names=tuple(factor.name for factor in defs), values=tuple(rows))
    validate_factor_values(defs, values)
    return values


def load_factor_model(
    defs_path: Union[str, Path],
    values_path: Union[str, Path],
    table: Table,
    delimiter: str = ",",
) -> FactorModel:
    """
    Ingest factor definitions and their annotated values for `table`.
    The values file has one column per factor and one row per table row, in table order.
    """
    defs = load_factor_defs(defs_path)
    mapping = FactorMapping.from_defs(defs, table.column_names)
    values = load_factor_values(values_path, defs, delimiter)
    if values.m != table.m:
        raise FactorShapeError(
            f"{values_path} has {values.m} rows but the table has {table.m}"
        )
    logger.info(
        f"[FACTOR MODEL LOAD] {mapping.k} factors over {mapping.d} columns, {values.m} annotated rows"
    )
    return FactorModel(defs=defs, mapping=mapping, values=values)
