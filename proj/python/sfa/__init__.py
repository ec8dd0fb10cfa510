"""Style fusion attention core, backed by the C++ extension."""

from ._sfa import (
    DomainError,
    IoError,
    NumericError,
    ShapeError,
    adain,
    cfg_combine,
    cycle_consistency,
    depth_delta,
    fused_attention,
    interpolate_style,
    load_feature_map,
    random_projection,
    save_feature_map,
    seeded_normal,
    style_alignment,
)

__all__ = [
    "DomainError",
    "IoError",
    "NumericError",
    "ShapeError",
    "adain",
    "cfg_combine",
    "cycle_consistency",
    "depth_delta",
    "fused_attention",
    "interpolate_style",
    "load_feature_map",
    "random_projection",
    "save_feature_map",
    "seeded_normal",
    "style_alignment",
]
