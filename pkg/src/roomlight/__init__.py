"""roomlight: an editable indoor-lighting toolkit.

A single HDR parametric light plus an LDR textured cuboid: fitting from HDR
panoramas, physically based probe renders, evaluation metrics, and an
interactive editing service.
"""

from .envmap import (
    EquirectImage,
    direction_grid,
    direction_to_pixel,
    pixel_to_direction,
    reexpose_percentile,
    solid_angle_map,
    solid_angle_of_row,
    tonemap_ldr,
)
from .geometry import (
    CornerDetectionError,
    CornerSet,
    CuboidGeom,
    CuboidTexture,
    LayoutMap,
    backproject,
    detect_corners,
    project_corners,
    render_layout,
    reproject_from_point,
    sphere_to_cuboid_texture,
)
from .hdrio import ParseError, load_envmap, read_pfm, save_envmap, write_pfm
from .light import (
    LightEstimate,
    ParametricLight,
    angular_radius,
    azimuth_of,
    direction_from_angles,
    elevation_of,
    light_from_manifest,
    light_mask,
    light_to_envmap,
    light_to_manifest,
    set_ambient,
    set_azimuth,
    set_color,
    set_distance,
    set_elevation,
    set_size,
)
from .metrics import MetricReport, compare, psnr, rgb_angular, rmse, si_rmse
from .rendering import (
    RenderCancelled,
    RenderedImage,
    ambient_geometry,
    composite_differential,
    emitter_geometry,
    render_combined,
    render_ibl,
    render_parametric,
)
from .scenes import TestScene, bare_plane, grid3x3, scene_by_name, three_spheres
from .fitting import (
    DominantLightEstimator,
    FitReport,
    FitSettings,
    LightRegion,
    detect_bright_ldr,
    detect_light_regions,
    fit_color_ambient,
    init_params,
    refine_adam,
    rescale_texture,
    select_dominant,
    strongest_light_ratio,
)

__version__ = "0.1.0"
