"""Height Interval Filtering: dynamic-point removal for LiDAR maps using
per-pillar probabilistic height intervals."""
from .bayes import OverlapCase, bayes_filter, fuse_pillar
from .core import (ConfigError, DataError, Frame, GroundTruth, HeightInterval, HifConfig,
                   HifError, InvariantError, Pillar, Point3, RigidPose, ScanFrame,
                   transform_to_world)
from .global_map import GlobalHeightMap, PointClass
from .pillars import PillarKey, mix_hash, pillar_offset
from .synthetic import SceneSpec, gen_scene, grid_oracle, load_scene

__all__ = [
    "ConfigError", "DataError", "Frame", "GlobalHeightMap", "GroundTruth", "HeightInterval",
    "HifConfig", "HifError", "InvariantError", "OverlapCase", "Pillar", "PillarKey", "Point3",
    "PointClass", "RigidPose", "ScanFrame", "SceneSpec", "bayes_filter", "fuse_pillar",
    "gen_scene", "grid_oracle", "load_scene", "mix_hash", "pillar_offset", "transform_to_world",
]
__version__ = "0.1.0"
