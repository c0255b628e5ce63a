# SPDX-License-Identifier: Apache-2.0
"""LiDAR point cloud simulation from recorded sequences."""

from ._lidarsim import (
    STAGES,
    ConfigError,
    DomainError,
    Error,
    LoadError,
    ParamVoxelGrid,
    ParseError,
    PointCloud,
    RaycastConfig,
    Surrogate,
    __version__,
    build_param_grid,
    chamfer,
    estimate_normals,
    icp_align,
    lpcs,
    radius_outlier_removal,
    raycast,
    read_cloud,
    run_stage,
    set_workers,
    train_surrogate,
    voxel_downsample,
    write_cloud,
)

__all__ = [
    "STAGES",
    "ConfigError",
    "DomainError",
    "Error",
    "LoadError",
    "ParamVoxelGrid",
    "ParseError",
    "PointCloud",
    "RaycastConfig",
    "Surrogate",
    "__version__",
    "build_param_grid",
    "chamfer",
    "estimate_normals",
    "icp_align",
    "lpcs",
    "radius_outlier_removal",
    "raycast",
    "read_cloud",
    "run_stage",
    "set_workers",
    "train_surrogate",
    "voxel_downsample",
    "write_cloud",
]
