"""File formats: CXA arrays and bundles, PGM/PPM rasters, key-value configs.

CXA layout (all little-endian)::

    bytes  0..7   magic  b"\\x89CXA\\r\\n\\x1a\\n"
    bytes  8..11  u32 format version (1)
    bytes 12..15  u32 reserved (0)
    u32 rank, then rank x u32 sizes
    u32 dtype tag
    raw C-order payload; complex values as interleaved (re, im) pairs
"""
import csv
import os
import struct

import numpy as np

MAGIC = b"\x89CXA\r\n\x1a\n"
VERSION = 1

_TAGS = {
    1: np.dtype("<f8"),
    2: np.dtype("<c16"),
    3: np.dtype("<i4"),
    4: np.dtype("u1"),
    5: np.dtype("<f4"),
    6: np.dtype("<c8"),
    7: np.dtype("<i8"),
    8: np.dtype("?"),
}


class CXAError(ValueError):
    pass


def _tag_for(dtype):
    dt = np.dtype(dtype)
    for tag, ref in _TAGS.items():
        if ref.kind == dt.kind and ref.itemsize == dt.itemsize:
            return tag
    raise CXAError(f"dtype {dtype} has no CXA tag")


def dumps_cxa(arr):
    arr = np.asarray(arr)
    tag = _tag_for(arr.dtype)
    header = MAGIC + struct.pack("<II", VERSION, 0)
    dims = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_TAGS[tag]).tobytes()
    return header + dims + struct.pack("<I", tag) + payload


def loads_cxa(buf):
    if len(buf) < 20 or buf[:8] != MAGIC:
        raise CXAError("not a CXA stream")
    version, _ = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise CXAError(f"unsupported CXA version {version}")
    (rank,) = struct.unpack_from("<I", buf, 16)
    off = 20
    shape = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    (tag,) = struct.unpack_from("<I", buf, off)
    off += 4
    if tag not in _TAGS:
        raise CXAError(f"unknown dtype tag {tag}")
    dt = _TAGS[tag]
    n = int(np.prod(shape, dtype=np.int64))
    if len(buf) - off != n * dt.itemsize:
        raise CXAError("payload size does not match header")
    return np.frombuffer(buf, dtype=dt, count=n, offset=off).reshape(shape).copy()


def save_cxa(path, arr):
    with open(path, "wb") as fh:
        fh.write(dumps_cxa(arr))


def load_cxa(path):
    with open(path, "rb") as fh:
        return loads_cxa(fh.read())


def save_bundle(directory, tensors):
    """Write named arrays as ``<name>.cxa`` plus a ``manifest.csv`` index."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "file", "dtype_tag", "shape"])
        for name in sorted(tensors):
            arr = np.asarray(tensors[name])
            fname = name.replace("/", "__") + ".cxa"
            save_cxa(os.path.join(directory, fname), arr)
            w.writerow([name, fname, _tag_for(arr.dtype), "x".join(map(str, arr.shape))])


def load_bundle(directory):
    out = {}
    with open(os.path.join(directory, "manifest.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["name"]] = load_cxa(os.path.join(directory, row["file"]))
    return out


# --------------------------------------------------------------------------
# rasters
# --------------------------------------------------------------------------

def to_uint8(img, vmin=None, vmax=None):
    img = np.asarray(img, dtype=float)
    lo = img.min() if vmin is None else vmin
    hi = img.max() if vmax is None else vmax
    if hi <= lo:
        return np.zeros(img.shape, np.uint8)
    return np.clip(np.rint(255 * (img - lo) / (hi - lo)), 0, 255).astype(np.uint8)


def write_pgm(path, img, comment=None):
    data = img if img.dtype == np.uint8 else to_uint8(img)
    H, W = data.shape
    head = b"P5\n"
    if comment:
        head += b"# " + comment.encode() + b"\n"
    head += f"{W} {H}\n255\n".encode()
    with open(path, "wb") as fh:
        fh.write(head + np.ascontiguousarray(data).tobytes())


def write_ppm(path, rgb, comment=None):
    rgb = np.asarray(rgb, dtype=np.uint8)
    H, W, _ = rgb.shape
    head = b"P6\n"
    if comment:
        head += b"# " + comment.encode() + b"\n"
    head += f"{W} {H}\n255\n".encode()
    with open(path, "wb") as fh:
        fh.write(head + np.ascontiguousarray(rgb).tobytes())


def read_pnm(path):
    """Minimal binary PGM/PPM reader (comments allowed)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    magic, W, H = tokens[0], int(tokens[1]), int(tokens[2])
    ch = 3 if magic == b"P6" else 1
    arr = np.frombuffer(data, np.uint8, count=W * H * ch, offset=pos)
    return arr.reshape((H, W, 3) if ch == 3 else (H, W))


# --------------------------------------------------------------------------
# key = value configs
# --------------------------------------------------------------------------

def _parse_value(text):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_kv(path):
    """Parse ``key = value`` lines; ``#`` starts a comment, commas make lists."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key = value")
            key, val = line.split("=", 1)
            out[key.strip()] = _parse_value(val)
    return out


def _format_value(v):
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(x) for x in v) + ("," if len(v) == 1 else "")
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_kv(path, mapping):
    with open(path, "w") as fh:
        for k in sorted(mapping):
            fh.write(f"{k} = {_format_value(mapping[k])}\n")
