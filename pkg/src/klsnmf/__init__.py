"""Kernel local-similarity nonnegative matrix factorization (KLS-NMF)."""

__version__ = "0.1.0"

from .errors import DataFormatError, InputError, KLSNMFError, NumericalFailure, ParameterError
from .kernel import KernelMatrix, kernel_distance, linear_kernel, rbf_kernel, validate_kernel
from .factorization import (FactorPair, SolveTrace, SolverConfig, UpdateWorkspace, init_factors,
                            kkt_residual_g, kkt_residual_w, objective, orthogonality_deviation,
                            solve_klsnmf, solve_nmf_baseline, update_g, update_w)
from .evaluation import (MetricReport, Partition, accuracy, assign_clusters, evaluate,
                         matching_oracle, nmi, purity)
from .data import (DataMatrix, SubsetSpec, load_dense_matrix, sample_class_subsets, synth_blobs,
                   write_dense_matrix)
