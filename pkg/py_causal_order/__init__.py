from py_causal_order.causal.causal_graph import CausalEdge, FactorCausalGraph
from py_causal_order.causal.pc_discovery import PCDiscovery, discover_pc
from py_causal_order.core.table import Ordering, Table, load_table, serialize
from py_causal_order.evaluation.experiment import compare_report
from py_causal_order.evaluation.metrics import auc_roc, f1_at_contamination
from py_causal_order.evaluation.split import LabeledTable, SplitSpec, split
from py_causal_order.factor.factor_model import FactorMapping, FactorModel, load_factor_model
from py_causal_order.ordering.lop_solver import OrderingSet, enumerate_top_k, solve_lop
from py_causal_order.ordering.preference import PreferenceMatrix, project
from py_causal_order.scoring.anomaly_scorer import ColumnWeights, compute_weights, score, score_table
from py_causal_order.scoring.external_bridge import export_sequences, import_external_nll
from py_causal_order.scoring.surrogate_scorer import SurrogateScorer, column_nll, fit

__version__ = "0.1.0"
