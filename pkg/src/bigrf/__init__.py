"""Random forests for big data: resampling variants, OOB diagnostics and an online forest."""

from .data import (Dataset, SimulationSpec, iter_csv, load_csv, permute_unbalanced,
                   permute_xbiases, read_schema, save_csv, simulate_weston, subsample)
from .ensemble import BigRandomForestClassifier, OnlineRandomForestClassifier
from .evaluation import (EvalReport, OOBEstimate, VariableImportance, bd_err_forest, err_forest,
                         err_test, evaluate, expected_unique, mean_leaf_gini, variable_importance)
from .exceptions import BigRFError, DataError, FormatError, PlanError, UnavailableError
from .forest import (Forest, load_forest, merge, predict, predict_batch, predict_votes,
                     save_forest, train, train_subforest)
from .online import OnlineForest, OnlineForestParams
from .resample import ResamplePlan, blb_weights, bootstrap_standard, partition_chunks
from .tree import SplitCandidate, Tree, TreeParams, WeightedRows, grow_tree

__version__ = "0.1.0"
