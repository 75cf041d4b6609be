"""Python bindings for the shipvl C++ core."""

from ._core import (
    ShipvlError,
    __version__,
    build_instruction,
    canonicalize_quad,
    evaluate,
    format_report_row,
    hbb_iou,
    mask_iou,
    parse_answer,
    quad_iou,
    run_cli,
    serialize_answer,
)

__all__ = [
    "ShipvlError",
    "__version__",
    "build_instruction",
    "canonicalize_quad",
    "evaluate",
    "format_report_row",
    "hbb_iou",
    "mask_iou",
    "parse_answer",
    "quad_iou",
    "run_cli",
    "serialize_answer",
]
