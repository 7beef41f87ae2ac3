"""8-bit image I/O: binary and ASCII PGM/PPM (P2, P3, P5, P6) and PNG.

Images are returned as float64 arrays in [0, 1], shape (H, W) for gray and
(3, H, W) for color.  Writing clamps to [0, 1] and rounds to the nearest
8-bit level, so ``read_image(write_image(u))`` reproduces any array already
on the 8-bit grid ``k / 255`` exactly.
"""

import os
import re

import numpy as np

__all__ = ["ImageFormatError", "read_image", "write_image", "to_uint8"]

_PNM_MAGIC = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}
_PNG_SIG = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    """Unreadable, unsupported or malformed image."""


def to_uint8(u):
    """Clamp to [0, 1] and quantize to 8 bits, channel-last for color."""
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise ValueError("image contains non-finite values")
    q = np.rint(np.clip(u, 0.0, 1.0) * 255.0).astype(np.uint8)
    if q.ndim == 3:
        q = np.moveaxis(q, 0, -1)
    return q


def _from_uint8(q):
    u = q.astype(np.float64) / 255.0
    if u.ndim == 3:
        u = np.ascontiguousarray(np.moveaxis(u, -1, 0))
    return u


def _pnm_tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    tok = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")
    for _ in range(count):
        m = tok.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def _read_pnm(data):
    magic = data[:2]
    channels, binary = _PNM_MAGIC[magic]
    (w, h, maxval), pos = _pnm_tokens(data, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError("non-numeric PNM header") from None
    if w <= 0 or h <= 0:
        raise ImageFormatError(f"invalid PNM size {w}x{h}")
    if not 0 < maxval < 256:
        raise ImageFormatError(f"only 8-bit PNM is supported (maxval {maxval})")
    n = w * h * channels
    if binary:
        # exactly one whitespace byte separates the header from the raster
        raster = data[pos + 1:pos + 1 + n]
        if len(raster) != n:
            raise ImageFormatError("truncated PNM raster")
        vals = np.frombuffer(raster, dtype=np.uint8).astype(np.int64)
    else:
        body = re.sub(rb"#[^\n]*", b"", data[pos:])
        try:
            vals = np.array(body.split(), dtype=np.int64)
        except ValueError:
            raise ImageFormatError("non-numeric PNM raster") from None
        if vals.size < n:
            raise ImageFormatError("truncated PNM raster")
        vals = vals[:n]
    if vals.max(initial=0) > maxval:
        raise ImageFormatError("PNM sample exceeds maxval")
    if maxval != 255:
        vals = np.rint(vals * (255.0 / maxval)).astype(np.int64)
    q = vals.astype(np.uint8).reshape((h, w, channels) if channels == 3 else (h, w))
    return _from_uint8(q)


def _read_png(path):
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I", "F"):
                raise ImageFormatError(f"only 8-bit PNG is supported (mode {im.mode})")
            if im.mode in ("L", "LA") or (im.mode == "P" and _palette_is_gray(im)):
                q = np.asarray(im.convert("L"))
            else:
                q = np.asarray(im.convert("RGB"))
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"cannot read PNG {path}: {exc}") from None
    return _from_uint8(q)


def _palette_is_gray(im):
    rgb = np.asarray(im.convert("RGB"))
    return bool(np.all(rgb[..., 0] == rgb[..., 1]) and np.all(rgb[..., 1] == rgb[..., 2]))


def read_image(path):
    """Read a PGM, PPM or PNG file into a float array in [0, 1].

    Raises
    ------
    ImageFormatError
        If the file is missing, truncated or in an unsupported format.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"cannot open {path}: {exc.strerror}") from None
    if data[:2] in _PNM_MAGIC:
        return _read_pnm(data)
    if data.startswith(_PNG_SIG):
        return _read_png(path)
    raise ImageFormatError(f"{path}: unsupported image format")


def _format_for(path, fmt):
    if fmt is not None:
        return fmt.lower()
    ext = os.path.splitext(str(path))[1].lower()
    return {".pgm": "pgm", ".ppm": "ppm", ".pnm": "pnm", ".png": "png"}.get(ext, "png")


def write_image(path, u, fmt=None, ascii=False):
    """Write ``u`` (values in [0, 1]) as 8-bit PGM/PPM or PNG.

    The format follows the file extension unless ``fmt`` is given.  Gray
    images go to PGM and color images to PPM for ``.pnm``.  Values are
    clamped to [0, 1] before quantization.
    """
    q = to_uint8(u)
    color = q.ndim == 3
    fmt = _format_for(path, fmt)
    if fmt == "png":
        from PIL import Image

        Image.fromarray(q, mode="RGB" if color else "L").save(path, format="PNG")
        return
    if fmt not in ("pgm", "ppm", "pnm"):
        raise ValueError(f"unsupported output format {fmt!r}")
    if (fmt == "pgm" and color) or (fmt == "ppm" and not color):
        raise ValueError(f"cannot write a {'color' if color else 'gray'} image as {fmt.upper()}")
    h, w = q.shape[:2]
    magic = {(False, False): "P5", (True, False): "P6", (False, True): "P2", (True, True): "P3"}[
        (color, ascii)
    ]
    header = f"{magic}\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        if ascii:
            rows = q.reshape(h, -1)
            fh.write(b"\n".join(b" ".join(b"%d" % v for v in r) for r in rows) + b"\n")
        else:
            fh.write(q.tobytes())
