"""Bootstrap prediction intervals, deterioration monitoring, and
uncertainty attribution for regression models.

The package has three layers:

* ``models`` and ``intervals``: a uniform estimator contract (ordinary
  least squares, Poisson GLM, decision tree, random forest, gradient
  boosting) and bootstrap-ensemble prediction intervals with 0.632+
  residual weighting, next to a training-residual baseline.
* ``monitor``: unsupervised deterioration scores that benchmark interval
  width against KS and PSI drift statistics on rolling windows.
* ``explain``: Shapley attribution of interval widths through a
  tree-ensemble surrogate, validated against an exact enumeration oracle.

``datasets`` and ``synth`` provide the benchmark corpus; ``cli`` exposes
the experiment pipelines as a command-line tool.
"""

__version__ = "0.1.0"

from .datasets import (
    DatasetError,
    DatasetTable,
    SplitTriple,
    WindowPlan,
    load_dataset,
    load_registry,
    random_split,
    rolling_windows,
    shift_feature,
    sorted_three_way_split,
    write_canonical_csv,
)
from .synth import generate_dataset, synthetic_names

__all__ = [
    "DatasetError",
    "DatasetTable",
    "SplitTriple",
    "WindowPlan",
    "load_dataset",
    "load_registry",
    "random_split",
    "rolling_windows",
    "shift_feature",
    "sorted_three_way_split",
    "write_canonical_csv",
    "generate_dataset",
    "synthetic_names",
    "__version__",
]
