"""Multi-behavior sequential recommender with relation-aware attention biases."""

import os

# Cap BLAS worker threads before numpy first loads; oversubscription makes
# tiny-matrix workloads slower and float reductions nondeterministic.
_threads = os.environ.get("BITREC_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
