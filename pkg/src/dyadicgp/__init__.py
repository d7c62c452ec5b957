"""Gaussian-process inference with a sparsely activated dyadic Laplace basis.

The Laplace kernel's RKHS on [0, 1] admits a closed-form orthonormal basis
indexed by a dyadic grid; at any input only L + 2 of the 2^L + 1 basis
functions are nonzero, and the active set follows from integer arithmetic.
This package provides the basis, the sparse indexing, mean-field variational
Bayesian layers built on it, a training/prediction engine, metrics, and a
benchmarking CLI.

Submodules import lazily so the CLI can pin thread environment variables
before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "cli",
    "counters",
    "data",
    "grid",
    "indexing",
    "kernel",
    "layers",
    "metrics",
    "verify",
    "vi",
)

_EXPORTS = {
    "laplace_kernel": "kernel",
    "GaussMarkovFactorization": "kernel",
    "boundary_basis": "kernel",
    "interior_basis": "kernel",
    "template_coefficients": "kernel",
    "orthonormal_combinations": "kernel",
    "rkhs_gram": "kernel",
    "nystrom_kernel": "kernel",
    "build_grid": "grid",
    "DyadicGrid": "grid",
    "tsi_indices": "indexing",
    "sparse_features": "indexing",
    "dense_features": "indexing",
    "VariationalLayer": "layers",
    "init_layer": "layers",
    "forward_sparse": "layers",
    "forward_dense": "layers",
    "Model": "layers",
    "TrainConfig": "vi",
    "GaussianLikelihood": "vi",
    "CategoricalLikelihood": "vi",
    "train": "vi",
    "predict": "vi",
    "kl_mean_field": "vi",
    "Dataset": "data",
    "sample_se_gp": "data",
    "fit_normalizer": "data",
    "load_csv": "data",
    "save_model": "data",
    "load_model": "data",
}

__all__ = ["__version__", *_SUBMODULES, *_EXPORTS]


def __getattr__(name: str):
    import importlib

    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
