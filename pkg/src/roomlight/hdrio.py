"""PFM and Radiance-HDR file codecs.

PFM is the canonical lossless interchange format (32-bit floats); Radiance
files are supported to ingest existing panoramas, at RGBE quantization.
"""

from __future__ import annotations

import os

import numpy as np

from .envmap import EquirectImage

__all__ = [
    "ParseError",
    "read_pfm",
    "write_pfm",
    "read_radiance_hdr",
    "write_radiance_hdr",
    "load_envmap",
    "save_envmap",
]


class ParseError(ValueError):
    """Malformed image file; carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# PFM
#
# Header: "PF\n<width> <height>\n<scale>\n" ("Pf" for grayscale). A negative
# scale marks little-endian floats. Pixel rows are stored bottom-up.
# ---------------------------------------------------------------------------

def _read_token(f) -> bytes:
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise ParseError("unexpected end of PFM header", f.tell())
        if ch in b" \t\r\n":
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a (H, W, 3) or (H, W) float32 array."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ParseError(f"not a PFM file (magic {magic!r})", 0)
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
        except ValueError:
            raise ParseError("malformed PFM dimensions", f.tell()) from None
        if width <= 0 or height <= 0:
            raise ParseError(f"bad PFM dimensions {width} x {height}", f.tell())
        try:
            scale = float(_read_token(f))
        except ValueError:
            raise ParseError("malformed PFM scale", f.tell()) from None
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        data = np.fromfile(f, dtype=endian + "f4", count=count)
        if data.size != count:
            raise ParseError(
                f"truncated PFM payload: expected {count} floats, got {data.size}",
                f.tell())
        img = data.reshape(height, width, channels)[::-1]  # rows are bottom-up
        if abs(scale) not in (0.0, 1.0):
            img = img * np.float32(abs(scale))
        if channels == 1:
            img = img[..., 0]
        return np.ascontiguousarray(img.astype(np.float32))


def write_pfm(path, image: np.ndarray) -> None:
    """Write a float32 PFM (little-endian, scale -1); lossless roundtrip."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"PFM supports (H, W) or (H, W, 3) arrays, got {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        arr[::-1].astype("<f4").tofile(f)


# ---------------------------------------------------------------------------
# Radiance HDR (RGBE)
#
# "#?RADIANCE" header, then "-Y H +X W" and RGBE scanlines, either flat
# 4-byte pixels or the adaptive RLE layout (per-channel runs) used for
# widths in [8, 32767]. Decode: value = mantissa * 2**(exponent - 136).
# ---------------------------------------------------------------------------

def _rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    rgbe = rgbe.astype(np.float64)
    exp = rgbe[..., 3]
    scale = np.where(exp > 0.0, np.ldexp(1.0, (exp - 136.0).astype(np.int64)), 0.0)
    return (rgbe[..., :3] * scale[..., None]).astype(np.float32)


def _float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    maxc = rgb.max(axis=-1)
    live = maxc >= 1e-32
    if np.any(live):
        mant, expo = np.frexp(maxc[live])
        scale = mant * 256.0 / maxc[live]
        out[live, :3] = np.clip(rgb[live] * scale[:, None], 0.0, 255.0).astype(np.uint8)
        out[live, 3] = (expo + 128).astype(np.uint8)
    return out


def read_radiance_hdr(path) -> np.ndarray:
    """Read a Radiance .hdr file into a (H, W, 3) float32 array."""
    with open(path, "rb") as f:
        magic = f.readline()
        if not magic.startswith(b"#?"):
            raise ParseError(f"not a Radiance file (magic {magic[:10]!r})", 0)
        while True:
            line = f.readline()
            if line == b"":
                raise ParseError("unexpected end of Radiance header", f.tell())
            if line.strip() == b"":
                break  # blank line ends the header
        res = f.readline().split()
        if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
            raise ParseError(f"unsupported resolution line {b' '.join(res)!r}", f.tell())
        try:
            height, width = int(res[1]), int(res[3])
        except ValueError:
            raise ParseError("malformed Radiance dimensions", f.tell()) from None
        if height <= 0 or width <= 0:
            raise ParseError(f"bad Radiance dimensions {width} x {height}", f.tell())

        img = np.empty((height, width, 4), dtype=np.uint8)
        for y in range(height):
            head = f.read(4)
            if len(head) < 4:
                raise ParseError(f"unexpected EOF at scanline {y}", f.tell())
            if head[0] == 2 and head[1] == 2 and (head[2] << 8 | head[3]) == width:
                # adaptive RLE: four channel planes, each run-length coded
                for ch in range(4):
                    pos = 0
                    plane = img[y, :, ch]
                    while pos < width:
                        code = f.read(1)
                        if not code:
                            raise ParseError(f"truncated RLE scanline {y}", f.tell())
                        n = code[0]
                        if n > 128:
                            run = n - 128
                            val = f.read(1)
                            if not val or pos + run > width:
                                raise ParseError(f"bad RLE run in scanline {y}", f.tell())
                            plane[pos:pos + run] = val[0]
                        else:
                            run = n
                            lit = f.read(run)
                            if len(lit) < run or pos + run > width:
                                raise ParseError(f"bad RLE literal in scanline {y}", f.tell())
                            plane[pos:pos + run] = np.frombuffer(lit, dtype=np.uint8)
                        pos += run
            else:
                # flat scanline; also handles the old-style consecutive-repeat marker
                row = np.empty((width, 4), dtype=np.uint8)
                row[0] = np.frombuffer(head, dtype=np.uint8)
                x = 1
                while x < width:
                    px = f.read(4)
                    if len(px) < 4:
                        raise ParseError(f"unexpected EOF at scanline {y}", f.tell())
                    if px[0] == 1 and px[1] == 1 and px[2] == 1:
                        repeat = px[3]
                        if x + repeat > width:
                            raise ParseError(f"bad repeat count in scanline {y}", f.tell())
                        row[x:x + repeat] = row[x - 1]
                        x += repeat
                    else:
                        row[x] = np.frombuffer(px, dtype=np.uint8)
                        x += 1
                img[y] = row
        return _rgbe_to_float(img)


def _rle_encode_plane(plane: np.ndarray) -> bytes:
    """Run-length encode one channel plane of a scanline."""
    out = bytearray()
    n = len(plane)
    i = 0
    while i < n:
        # find a run of >= 4 equal bytes
        run_start = i
        run_len = 1
        while run_start + run_len < n and run_len < 127 and \
                plane[run_start + run_len] == plane[run_start]:
            run_len += 1
        if run_len >= 4:
            out.append(128 + run_len)
            out.append(int(plane[run_start]))
            i += run_len
        else:
            # literal segment up to the next long run (or 128 bytes)
            lit_end = i + 1
            while lit_end < n and lit_end - i < 128:
                nxt = 1
                while lit_end + nxt < n and nxt < 4 and plane[lit_end + nxt] == plane[lit_end]:
                    nxt += 1
                if nxt >= 4:
                    break
                lit_end += 1
            out.append(lit_end - i)
            out.extend(plane[i:lit_end].tobytes())
            i = lit_end
    return bytes(out)


def write_radiance_hdr(path, image: np.ndarray) -> None:
    """Write a Radiance .hdr file (RGBE; adaptive RLE when width allows)."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"Radiance writer expects (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    rgbe = _float_to_rgbe(arr)
    with open(path, "wb") as f:
        f.write(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
        f.write(f"-Y {h} +X {w}\n".encode("ascii"))
        if 8 <= w <= 32767:
            for y in range(h):
                f.write(bytes([2, 2, (w >> 8) & 0xFF, w & 0xFF]))
                for ch in range(4):
                    f.write(_rle_encode_plane(rgbe[y, :, ch]))
        else:
            rgbe.tofile(f)


# ---------------------------------------------------------------------------
# Equirect wrappers
# ---------------------------------------------------------------------------

def load_envmap(path, is_hdr: bool = True) -> EquirectImage:
    """Load a panorama (by extension: .pfm or .hdr) as an EquirectImage."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        arr = read_pfm(path)
        if arr.ndim == 2:
            arr = np.repeat(arr[..., None], 3, axis=-1)
    elif ext in (".hdr", ".pic", ".rgbe"):
        arr = read_radiance_hdr(path)
    else:
        raise ValueError(f"unsupported panorama format {ext!r} (use .pfm or .hdr)")
    return EquirectImage(np.maximum(arr, 0.0), is_hdr=is_hdr)


def save_envmap(path, img: EquirectImage) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        write_pfm(path, img.data)
    elif ext in (".hdr", ".pic", ".rgbe"):
        write_radiance_hdr(path, img.data)
    else:
        raise ValueError(f"unsupported panorama format {ext!r} (use .pfm or .hdr)")
