"""Tilt-shift refocusing of calibrated light field camera arrays."""

from ._tiltshift import (
    Aperture,
    Calibration,
    Dataset,
    Plane,
    PointCloud,
    TiltshiftError,
    adjust_plane,
    apply_projection,
    build_point_cloud,
    disparity_to_depth,
    homography,
    load_dataset,
    load_image,
    make_aperture,
    oracle_refocus,
    plane_distance,
    plane_from_click,
    plane_from_manual,
    plane_from_three_points,
    projection_map,
    psnr,
    refocus,
    refocus_at_virtual_view,
    reproject_pixel,
    save_image,
    set_thread_count,
    shift_and_sum,
    synthetic_plane_dataset,
    to_8bit,
)

__all__ = [name for name in dir() if not name.startswith("_")]
