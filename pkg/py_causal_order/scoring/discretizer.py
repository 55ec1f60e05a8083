from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from py_causal_order.core.table import MISSING_RENDERING, Cell, ColumnKind, ColumnSpec


class ColumnDiscretizer(BaseModel):
    """
    Maps the cells of one column onto a finite vocabulary; the extra last code is the unknown bucket
    for anything unseen at fit time.

    - categorical: the observed category tokens.
    - numerical: equal-mass quantile bins from training data, right-closed; values outside the
      training range fall into the extreme bins.
    - text: whitespace-token count hashed into `text_buckets` buckets.

    A missing cell is the token 'Unknown', part of the vocabulary only when training data had one.
    """

    model_config = ConfigDict(frozen=True)
    column: str
    kind: ColumnKind
    vocabulary: tuple[str, ...]
    bin_edges: tuple[float, ...] = ()
    text_buckets: int = Field(default=1, ge=1)
    _codes: dict[str, int] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: object) -> None:
        self._codes = {token: code for code, token in enumerate(self.vocabulary)}

    @property
    def size(self) -> int:
        return len(self.vocabulary) + 1

    @property
    def unknown_code(self) -> int:
        return len(self.vocabulary)

    def token(self, cell: Cell) -> str:
        if cell.is_missing:
            return MISSING_RENDERING
        match self.kind:
            case ColumnKind.NUMERICAL:
                return f"bin{int(np.searchsorted(self.bin_edges, float(cell.value), side='left'))}"  # type: ignore[arg-type]
            case ColumnKind.TEXT:
                return f"len{len(str(cell.value).split()) % self.text_buckets}"
            case _:
                return str(cell.value)

    def encode(self, cell: Cell) -> int:
        return self._codes.get(self.token(cell), self.unknown_code)

    @classmethod
    def fit(cls, column: ColumnSpec, cells: Sequence[Cell], bins: int) -> "ColumnDiscretizer":
        edges: tuple[float, ...] = ()
        if column.kind is ColumnKind.NUMERICAL:
            numbers = np.array([float(cell.value) for cell in cells if not cell.is_missing])  # type: ignore[arg-type]
            if numbers.size > 0:
                quantiles = np.unique(np.quantile(numbers, np.linspace(0.0, 1.0, bins + 1)))
                edges = tuple(float(edge) for edge in quantiles[1:-1])
        unfitted = cls(column=column.name, kind=column.kind, vocabulary=(), bin_edges=edges, text_buckets=bins)

        observed = {unfitted.token(cell) for cell in cells}
        if column.kind is ColumnKind.NUMERICAL:
            vocabulary = [f"bin{position}" for position in range(len(edges) + 1)]
            if MISSING_RENDERING in observed:
                vocabulary.append(MISSING_RENDERING)
        else:
            vocabulary = sorted(observed)
        return cls(
            column=column.name,
            kind=column.kind,
            vocabulary=tuple(vocabulary),
            bin_edges=edges,
            text_buckets=bins,
        )
