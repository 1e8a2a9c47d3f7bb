"""Image values, range discipline, grayscale conversion, and PPM/PGM I/O.

An image is an (H, W, C) float64 array with C in {1, 3} and intensities in
[0, 1].  Arrays are kept C-contiguous, so the memory layout is row-major
with channels interleaved, matching the byte order of binary P6 files.
Operations never mutate their inputs.

File format: binary PPM (P6, 3 channels) and PGM (P5, 1 channel), maxval
255.  The writer emits a canonical header ``P6\\n<w> <h>\\n255\\n`` with no
comments; the reader additionally accepts '#' comments inside the header.
Read/write are exact inverses for intensities on the 1/255 grid and for
files in the canonical layout.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

# ITU-R 601 luma weights.
LUMA_R = 0.299
LUMA_G = 0.587


def check_image(img: np.ndarray, channels: int | None = None) -> np.ndarray:
    """Validate the (H, W, C) shape contract; returns the array unchanged."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise DataError(f"expected (H, W, C) image with C in {{1, 3}}, got shape {img.shape}")
    if channels is not None and img.shape[2] != channels:
        raise DataError(f"expected {channels}-channel image, got {img.shape[2]} channels")
    return img


def clip01(img: np.ndarray) -> np.ndarray:
    """Clamp every intensity into [0, 1]. Idempotent; shape preserved."""
    return np.clip(img, 0.0, 1.0)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Collapse a 3-channel image to 1 channel with 0.299/0.587/0.114 luma.

    Computed as B + 0.299*(R-B) + 0.587*(G-B), which is algebraically the
    same weighting but exact on R=G=B inputs (the three literal weights do
    not sum to 1.0 in binary floating point).
    """
    check_image(img)
    if img.shape[2] == 1:
        raise DataError("already grayscale")
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    gray = b + LUMA_R * (r - b) + LUMA_G * (g - b)
    return gray[:, :, np.newaxis]


def replicate_gray(img: np.ndarray) -> np.ndarray:
    """Expand 1 channel to 3 identical channels."""
    check_image(img, channels=1)
    return np.repeat(img, 3, axis=2)


def quantize01(img: np.ndarray) -> np.ndarray:
    """Round intensities to the 1/255 grid, i.e. what a PPM write/read does."""
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def write_ppm(img: np.ndarray) -> bytes:
    """Serialize an image to binary P6 (3 channels) or P5 (1 channel)."""
    check_image(img)
    h, w, c = img.shape
    magic = b"P6" if c == 3 else b"P5"
    payload = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).tobytes()
    return magic + b"\n%d %d\n255\n" % (w, h) + payload


def read_ppm(data: bytes) -> np.ndarray:
    """Parse binary P5/P6 bytes into an image; intensities are byte/255."""
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise DataError(f"bad magic {magic!r}: expected P5 or P6")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        maxval = int(tokens[3])
    except ValueError:
        raise DataError("malformed header: non-numeric dimension or maxval") from None
    if width < 1 or height < 1:
        raise DataError(f"malformed header: bad dimensions {width}x{height}")
    if maxval != 255:
        raise DataError(f"unsupported maxval {maxval}: only 255 is supported")
    payload = data[offset:]
    expected = width * height * channels
    if len(payload) < expected:
        raise DataError(f"truncated pixel payload: expected {expected} bytes, got {len(payload)}")
    if len(payload) > expected:
        raise DataError(f"oversized pixel payload: expected {expected} bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    return pixels.reshape(height, width, channels)


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Collect `count` header tokens, skipping whitespace and '#' comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the header.
    """
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i] != ord("#"):
            i += 1
        if i == start:
            raise DataError("malformed header: ran out of data")
        tokens.append(data[start:i])
    if i >= n or not data[i : i + 1].isspace():
        raise DataError("malformed header: missing whitespace after maxval")
    return tokens, i + 1


def save_ppm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(write_ppm(img))


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_ppm(f.read())
