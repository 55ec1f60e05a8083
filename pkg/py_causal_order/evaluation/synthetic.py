"""
Synthetic data with known causal structure, used by the directional experiments and the tests.
"""

from typing import NamedTuple

import numpy as np

from py_causal_order.core.table import ColumnKind, ColumnSpec, Table
from py_causal_order.evaluation.split import LabeledTable
from py_causal_order.factor.factor_model import FactorDef, FactorMapping, FactorModel, FactorValueMatrix

CHAIN_FACTORS = ("f1", "f2", "f3")


def _noisy_copy(rng: np.random.Generator, source: np.ndarray, levels: int, noise: float, shift: int = 0) -> np.ndarray:
    """(source + shift) mod levels, each entry replaced by a uniform level with probability `noise`."""
    copied = (source + shift) % levels
    replaced = rng.random(source.size) < noise
    copied[replaced] = rng.integers(0, levels, size=int(replaced.sum()))
    return copied


def chain_factor_values(n: int, seed: int, levels: int = 3, noise: float = 0.3) -> FactorValueMatrix:
    """f1 -> f2 -> f3; f1 and f3 are independent given f2."""
    rng = np.random.default_rng(seed)
    f1 = rng.integers(0, levels, size=n)
    f2 = _noisy_copy(rng, f1, levels, noise)
    f3 = _noisy_copy(rng, f2, levels, noise)
    return FactorValueMatrix.from_array(CHAIN_FACTORS, np.column_stack([f1, f2, f3]))


def collider_factor_values(n: int, seed: int, noise: float = 0.2) -> FactorValueMatrix:
    """f1 -> f3 <- f2 with independent binary causes and f3 = f1 + f2 up to noise."""
    rng = np.random.default_rng(seed)
    f1 = rng.integers(0, 2, size=n)
    f2 = rng.integers(0, 2, size=n)
    f3 = f1 + f2
    replaced = rng.random(n) < noise
    f3[replaced] = rng.integers(0, 3, size=int(replaced.sum()))
    return FactorValueMatrix.from_array(CHAIN_FACTORS, np.column_stack([f1, f2, f3]))


class PlantedChain(NamedTuple):
    data: LabeledTable
    factor_model: FactorModel


def make_planted_chain(
    seed: int = 0,
    n_normal: int = 500,
    n_anomaly: int = 50,
    levels: int = 4,
    noise: float = 0.05,
) -> PlantedChain:
    """
    Six categorical columns: c1 -> c2 -> c3 are noisy deterministic copies of each other and c4..c6
    are independent. Anomalies draw c2 away from the value c1 implies; c3 still follows c2.
    Three factors describe c1, c2 and c3 one to one, valued by the column level.
    Rows are shuffled, so labels are interleaved.
    """
    rng = np.random.default_rng(seed)
    n = n_normal + n_anomaly
    c1 = rng.integers(0, levels, size=n)
    c2 = _noisy_copy(rng, c1, levels, noise, shift=1)
    offsets = rng.integers(1, levels, size=n_anomaly)
    c2[n_normal:] = (c1[n_normal:] + 1 + offsets) % levels
    c3 = _noisy_copy(rng, c2, levels, noise, shift=2)
    independent = rng.integers(0, levels, size=(n, 3))
    codes = np.column_stack([c1, c2, c3, independent])
    labels = np.array([0] * n_normal + [1] * n_anomaly)

    permutation = rng.permutation(n)
    codes = codes[permutation]
    labels = labels[permutation]

    columns = [ColumnSpec(name=f"c{position + 1}", kind=ColumnKind.CATEGORICAL, index=position) for position in range(6)]
    table = Table.from_values(
        columns,
        [[f"{column.name}_v{code}" for column, code in zip(columns, row)] for row in codes],
    )
    defs = [
        FactorDef(
            name=factor,
            possible_values=tuple(range(levels)),
            column_based=(f"c{position + 1}",),
            description=f"Level of column c{position + 1}",
        )
        for position, factor in enumerate(CHAIN_FACTORS)
    ]
    factor_model = FactorModel(
        defs=defs,
        mapping=FactorMapping.from_defs(defs, table.column_names),
        values=FactorValueMatrix.from_array(CHAIN_FACTORS, codes[:, :3]),
    )
    return PlantedChain(data=LabeledTable(table=table, labels=tuple(int(label) for label in labels)), factor_model=factor_model)
