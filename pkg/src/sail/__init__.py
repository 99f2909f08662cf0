"""Self-augmented contrastive learning for shallow GNN node embeddings.

Subpackages are imported lazily so that the command-line entry point can
configure thread limits (SAIL_THREADS) before numpy loads its BLAS.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "graph",
    "dataset",
    "numerics",
    "checkpoint",
    "encoder",
    "samplers",
    "losses",
    "training",
    "evaluation",
    "rng",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f"sail.{name}")
    raise AttributeError(f"module 'sail' has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
