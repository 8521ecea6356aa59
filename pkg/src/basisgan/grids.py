"""Binary PPM (P6) sample grids."""

from __future__ import annotations

import numpy as np


def to_bytes(img):
    """[-1, 1] floats to uint8 via round(255 (v + 1) / 2), clamped."""
    v = np.rint(255.0 * (np.asarray(img, dtype=np.float64) + 1.0) / 2.0)
    return np.clip(v, 0, 255).astype(np.uint8)


def as_rgb(img):
    """(C, H, W) with C in {1, 3} to (H, W, 3)."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"expected (1|3, H, W) image, got {img.shape}")
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    return img.transpose(1, 2, 0)


def tile(rows, gap=1, fill=-1.0):
    """Grid of equally sized (C, H, W) images, one list per row; returns (H', W', 3) in [-1, 1]."""
    rows = [[as_rgb(im) for im in row] for row in rows]
    h, w, _ = rows[0][0].shape
    ncol = max(len(r) for r in rows)
    out = np.full((len(rows) * (h + gap) - gap, ncol * (w + gap) - gap, 3), fill, dtype=np.float64)
    for i, row in enumerate(rows):
        for j, im in enumerate(row):
            if im.shape != (h, w, 3):
                raise ValueError(f"grid cell ({i}, {j}) has shape {im.shape}, expected {(h, w, 3)}")
            out[i * (h + gap):i * (h + gap) + h, j * (w + gap):j * (w + gap) + w] = im
    return out


def scatter_image(points, size=48, lo=-3.0, hi=3.0):
    """Occupancy image (1, size, size) of 2-D points: white where a sample lands."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    img = np.full((1, size, size), -1.0)
    ij = np.floor((pts - lo) / (hi - lo) * size).astype(int)
    ok = np.all((ij >= 0) & (ij < size), axis=1)
    # y up: row 0 is the top of the plot
    img[0, size - 1 - ij[ok, 1], ij[ok, 0]] = 1.0
    return img


def write_ppm(path, img):
    """Write an (H, W, 3) [-1, 1] image as binary P6."""
    data = to_bytes(img)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got {data.shape}")
    h, w, _ = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path):
    """Inverse of write_ppm for files it wrote; returns uint8 (H, W, 3)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError(f"{path}: not an 8-bit P6 file")
    w, h = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8)
    if data.size != h * w * 3:
        raise ValueError(f"{path}: expected {h * w * 3} bytes of pixels, got {data.size}")
    return data.reshape(h, w, 3)
