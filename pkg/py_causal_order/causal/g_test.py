from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.stats import chi2, chi2_contingency

MIN_EXPECTED_COUNT = 5.0
MAX_SPARSE_CELL_SHARE = 0.2


class GTestResult(BaseModel):
    """
    Outcome of a (conditional) G-test of independence:
    - `statistic`: G summed over the testable strata.
    - `dof`: degrees of freedom summed over the testable strata.
    - `p_value`: chi-square tail probability, 0.0 when nothing was testable.
    - `testable`: False when every stratum was too sparse; dependence is then assumed.
    """

    model_config = ConfigDict(frozen=True)
    statistic: float
    dof: int
    p_value: float
    testable: bool
    skipped_strata: int = 0

    def is_independent(self, alpha: float) -> bool:
        return self.testable and self.p_value > alpha


def _stratum_statistic(x: np.ndarray, y: np.ndarray) -> Optional[tuple[float, int]]:
    x_levels, x_codes = np.unique(x, return_inverse=True)
    y_levels, y_codes = np.unique(y, return_inverse=True)
    if len(x_levels) < 2 or len(y_levels) < 2:
        # one observed level carries no evidence either way
        return None
    table = np.zeros((len(x_levels), len(y_levels)), dtype=np.float64)
    np.add.at(table, (x_codes, y_codes), 1.0)
    statistic, _, dof, expected = chi2_contingency(table, correction=False, lambda_="log-likelihood")
    if np.mean(expected < MIN_EXPECTED_COUNT) > MAX_SPARSE_CELL_SHARE:
        return None
    return float(statistic), int(dof)


def g_test(x: np.ndarray, y: np.ndarray, conditioning: Optional[np.ndarray] = None) -> GTestResult:
    """
    G-test of `x ⊥ y | conditioning` on discrete data.

    The statistic and degrees of freedom are summed over the strata of the conditioning columns,
    each stratum using the levels observed in it. Strata where more than 20% of the expected
    counts fall below 5 are skipped; when no stratum is left the test is untestable.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if conditioning is None or conditioning.size == 0:
        strata = [np.arange(len(x))]
    else:
        conditioning = np.asarray(conditioning).reshape(len(x), -1)
        _, stratum_codes = np.unique(conditioning, axis=0, return_inverse=True)
        stratum_codes = np.asarray(stratum_codes).reshape(-1)
        strata = [np.flatnonzero(stratum_codes == code) for code in range(int(stratum_codes.max()) + 1)]

    statistic = 0.0
    dof = 0
    skipped = 0
    for rows in strata:
        outcome = _stratum_statistic(x[rows], y[rows])
        if outcome is None:
            skipped += 1
            continue
        statistic += outcome[0]
        dof += outcome[1]

    if dof == 0:
        return GTestResult(statistic=0.0, dof=0, p_value=0.0, testable=False, skipped_strata=skipped)
    return GTestResult(
        statistic=statistic,
        dof=dof,
        p_value=float(chi2.sf(statistic, dof)),
        testable=True,
        skipped_strata=skipped,
    )
