"""Spectral graph filtering laboratory.

Graph filters as functions on the Laplacian spectrum, sliced at
eigenvalues into disjoint pieces; least-squares polynomial fitting in
several bases; a trigonometric filter evaluated through a power-series
decomposition so graph convolution needs only sparse matrix powers;
numerical verification of the error-sandwich inequalities; and decoupled
trainable models with a reproducible experiment CLI.
"""

from .bounds import BoundsReport, construction_error, verify_lemma1, verify_theorem1
from .conv import (
    PropagatedFeatures,
    convolve_from_precomputed,
    load_features,
    precompute,
    save_features,
    tpd_convolve,
)
from .data import Dataset, load_dataset, random_split, save_dataset, synthetic_dataset
from .filters import (
    PolyFit,
    SliceSet,
    TargetFilter,
    TARGET_FILTERS,
    design_matrix,
    eval_basis,
    eval_target,
    get_filter,
    lse_fit_continuous,
    lse_fit_discrete,
    quad_grid,
    slice_errors,
    slice_filter,
)
from .graph import (
    EigenSystem,
    Graph,
    SparseMatrix,
    eigendecompose,
    erdos_renyi,
    normalized_laplacian,
    read_edge_list,
    spmv,
    write_edge_list,
)
from .model import (
    Adam,
    Mlp,
    TfgnnModel,
    TrainConfig,
    filter_learning_model,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    model_backward,
    model_forward,
    save_checkpoint,
    train,
)
from .trig import (
    DecayStats,
    TaylorTables,
    TrigParams,
    decay_report,
    effective_coefficients,
    eval_trig_exact,
    eval_trig_tpd,
    filter_fourier_coeffs,
    fourier_coeffs,
    load_trig_params,
    save_trig_params,
    taylor_tables,
)

__version__ = "0.1.0"
