from .color import gray_to_ycbcr, rgb_to_ycbcr, to_gray, ycbcr_to_rgb
from .pnm import PnmError, pgm_read, pgm_write, ppm_read, ppm_write
from .render import ArrowCmd, BoxCmd, MaskTintCmd, OverlayLayer, render_overlay
from .y4m import (
    Y4mError,
    Y4mHeader,
    Y4mReader,
    iter_y4m,
    read_frame,
    read_header,
    read_y4m,
    write_y4m,
    y4m_write,
)

__all__ = [
    "ArrowCmd", "BoxCmd", "MaskTintCmd", "OverlayLayer", "PnmError", "Y4mError",
    "Y4mHeader", "Y4mReader", "gray_to_ycbcr", "iter_y4m", "pgm_read", "pgm_write",
    "ppm_read", "ppm_write", "read_frame", "read_header", "read_y4m", "render_overlay",
    "rgb_to_ycbcr", "to_gray", "write_y4m", "y4m_write", "ycbcr_to_rgb",
]
