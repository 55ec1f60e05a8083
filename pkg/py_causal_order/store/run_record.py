from typing import Optional

from sqlmodel import Field

from py_causal_order.store.model import RunStoreModel


class EvalRunRecord(RunStoreModel, table=True):
    """
    One finished run of an evaluation grid: a (graph source, ordering mode, weighting, K) cell on one
    seed. Random-ordering runs store no graph source and no K. `fingerprint` hashes the data and every
    parameter that influences the run, so stored runs are only reused for an identical experiment.
    """

    __tablename__ = "eval_run"
    id: Optional[int] = Field(default=None, primary_key=True)
    fingerprint: str = Field(index=True)
    graph_source: Optional[str] = None
    ordering_mode: str
    weighting: str
    k: Optional[int] = None
    seed: int
    auc: float
    f1: float
    n_orderings: int

    @property
    def run_key(self) -> tuple[Optional[str], str, str, Optional[int], int]:
        return (self.graph_source, self.ordering_mode, self.weighting, self.k, self.seed)
