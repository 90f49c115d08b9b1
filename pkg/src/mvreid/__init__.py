"""Two-view metric-learning re-identification toolkit."""

import os

# Single-threaded BLAS keeps GEMM reductions deterministic; only effective if
# numpy has not been imported yet, which holds for the CLI entry points.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

__version__ = "0.1.0"
