"""Python bindings for the kfac-bench K-FAC optimizer."""

from ._core import (
    Activation,
    Approx,
    Architecture,
    ConfigError,
    Dataset,
    FactorSet,
    FisherComparison,
    InverseCache,
    KfacError,
    KfacOptimizer,
    LossKind,
    NumericalError,
    OptimizerConfig,
    Problem,
    SgdConfig,
    SgdOptimizer,
    TaskKind,
    build_inverse,
    compare_fisher,
    dense_fisher,
    devec,
    evaluate,
    exact_factors,
    fisher_vec,
    forward,
    init_sparse,
    list_problems,
    loss_and_gradient,
    make_problem,
    propose,
    run_experiment,
    sampled_factors,
    vec,
)

__all__ = [name for name in dir() if not name.startswith("_")]
