"""Mesh transformer for autoregressive forecasting of velocity and pressure
fields on irregular, dynamic triangle meshes.

The heavy lifting lives in the compiled extension; this package re-exports the
main operations:

    >>> import flowcast
    >>> flowcast.generate_dataset("out", family="taylor-green", n_traj=2)
    >>> flowcast.precompute_clusters("out", size=10)
    >>> flowcast.compute_stats("out")
"""

from flowcast._core import (  # noqa: F401
    DataError,
    FormatError,
    MeshFrame,
    Model,
    NumericError,
    Trajectory,
    cluster_barycenters,
    compute_stats,
    delaunay,
    downsample_frame,
    evaluate,
    generate_dataset,
    gradcheck,
    k_number,
    load_trajectory,
    n_rmse,
    poisson_disk_downsample,
    positional_encoding,
    precompute_clusters,
    same_size_kmeans,
    save_trajectory,
    taylor_green,
    train,
    validate,
    validate_frame,
)

__all__ = [
    "DataError",
    "FormatError",
    "MeshFrame",
    "Model",
    "NumericError",
    "Trajectory",
    "cluster_barycenters",
    "compute_stats",
    "delaunay",
    "downsample_frame",
    "evaluate",
    "generate_dataset",
    "gradcheck",
    "k_number",
    "load_trajectory",
    "n_rmse",
    "poisson_disk_downsample",
    "positional_encoding",
    "precompute_clusters",
    "same_size_kmeans",
    "save_trajectory",
    "taylor_green",
    "train",
    "validate",
    "validate_frame",
]

__version__ = "0.1.0"
