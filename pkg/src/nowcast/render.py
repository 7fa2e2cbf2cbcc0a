"""Viridis rendering of frames, side-by-side comparison panels, and GIFs.

Pure presentation: nothing here mutates frames or reports. Values in [0,1]
index the standard 256-entry viridis lookup table via round(v * 255), so
0.0 maps to RGB (68, 1, 84) and 1.0 to (253, 231, 37).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image, ImageDraw

LABEL_BAR_PX = 14
_VIRIDIS_LUT = np.round(np.asarray(matplotlib.colormaps["viridis"].colors) * 255.0).astype(np.uint8)


def viridis_rgb(values: np.ndarray) -> np.ndarray:
    """Map [h,w] values in [0,1] to [h,w,3] uint8 RGB."""
    idx = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.intp)
    return _VIRIDIS_LUT[idx]


def _as_hw(frame) -> np.ndarray:
    values = frame.values if hasattr(frame, "values") else np.asarray(frame)
    return values.reshape(values.shape[-2], values.shape[-1])


def render_frame(frame, out_path) -> None:
    """Write one frame as an 8-bit RGB PNG with the frame's own dimensions."""
    img = Image.fromarray(viridis_rgb(_as_hw(frame)), mode="RGB")
    img.save(out_path, format="PNG")


def _panel(truth, pred, label: str) -> Image.Image:
    """One comparison panel: truth left, prediction right, label bar on top."""
    t_img = viridis_rgb(_as_hw(truth))
    p_img = viridis_rgb(_as_hw(pred))
    h, w = t_img.shape[:2]
    canvas = Image.new("RGB", (2 * w, h + LABEL_BAR_PX), "black")
    canvas.paste(Image.fromarray(t_img), (0, LABEL_BAR_PX))
    canvas.paste(Image.fromarray(p_img), (w, LABEL_BAR_PX))
    draw = ImageDraw.Draw(canvas)
    draw.text((2, 1), f"truth {label}", fill="white")
    draw.text((w + 2, 1), f"pred {label}", fill="white")
    return canvas


def render_comparison(
    pred: np.ndarray,
    truth: np.ndarray,
    out_dir,
    gif_delay_ms: int = 200,
    strip_panels: int = 4,
) -> dict:
    """Per-timestep side-by-side panels, an animated GIF over all timesteps,
    and a strip of the first ``strip_panels`` lead times (truth row above
    prediction row). Returns the written paths."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"render_comparison: shapes differ: {pred.shape} vs {truth.shape}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = pred.shape[0]
    panels = []
    panel_paths = []
    for t in range(n):
        panel = _panel(truth[t], pred[t], f"t+{t + 1}")
        path = out_dir / f"panel_{t:02d}.png"
        panel.save(path, format="PNG")
        panels.append(panel)
        panel_paths.append(path)
    gif_path = out_dir / "comparison.gif"
    panels[0].save(
        gif_path,
        format="GIF",
        save_all=True,
        append_images=panels[1:],
        duration=gif_delay_ms,
        loop=0,
    )
    strip_path = out_dir / "strip.png"
    render_strip(pred, truth, strip_path, n_panels=min(strip_panels, n))
    return {"panels": panel_paths, "gif": gif_path, "strip": strip_path}


def render_strip(pred: np.ndarray, truth: np.ndarray, out_path, n_panels: int = 4) -> None:
    """Truth row above prediction row for the first n_panels lead times."""
    h, w = _as_hw(truth[0]).shape
    canvas = Image.new("RGB", (n_panels * w, 2 * h + 2 * LABEL_BAR_PX), "black")
    draw = ImageDraw.Draw(canvas)
    for t in range(n_panels):
        canvas.paste(Image.fromarray(viridis_rgb(_as_hw(truth[t]))), (t * w, LABEL_BAR_PX))
        canvas.paste(
            Image.fromarray(viridis_rgb(_as_hw(pred[t]))), (t * w, h + 2 * LABEL_BAR_PX)
        )
        draw.text((t * w + 2, 1), f"truth t+{t + 1}", fill="white")
        draw.text((t * w + 2, h + LABEL_BAR_PX + 1), f"pred t+{t + 1}", fill="white")
    canvas.save(out_path, format="PNG")
