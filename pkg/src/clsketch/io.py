"""File formats: model (CLNN), sketch (CLSK), PGM images, CSV point clouds.

Binary formats are little-endian and round-trip bit-exactly; CSV round-trips
to full float64 text precision.  All writers go through an atomic
temp-file-plus-rename so a failed run never leaves a partial output.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .data import AffineNormalizer
from .denoise import GrayImage
from .errors import FileFormatError
from .nn import ReluNet
from .sketch import FrequencySet, sample_frequencies

MODEL_MAGIC = b"CLNN"
SKETCH_MAGIC = b"CLSK"
MODEL_VERSION = 1
SKETCH_VERSION = 1


def _format_error(code, message):
    err = FileFormatError(message)
    err.code = code
    return err


def atomic_write(path, payload: bytes):
    """Write bytes to path via a same-directory temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".clsketch-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n):
        if self.off + n > len(self.data):
            raise _format_error("truncated", f"{self.path}: truncated file")
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


# model files ---------------------------------------------------------------


def write_model(path, net: ReluNet, normalizer: AffineNormalizer):
    if normalizer.d != net.input_dim:
        raise _format_error("bad_header", "normalizer dimension differs from net input")
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(net.layer_dims))]
    parts.append(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
    parts.append(net.params.astype("<f8").tobytes())
    parts.append(np.asarray(normalizer.lo, dtype="<f8").tobytes())
    parts.append(np.asarray(normalizer.hi, dtype="<f8").tobytes())
    atomic_write(path, b"".join(parts))


def read_model(path):
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(4) != MODEL_MAGIC:
        raise _format_error("bad_magic", f"{path}: not a model file")
    version, n_layers = r.unpack("II")
    if version != MODEL_VERSION:
        raise _format_error("bad_version", f"{path}: unsupported model version {version}")
    if n_layers < 2:
        raise _format_error("bad_header", f"{path}: model needs at least 2 layers")
    dims = r.unpack(f"{n_layers}I")
    d0 = sum(dims[k] * dims[k + 1] + dims[k + 1] for k in range(n_layers - 1))
    params = np.frombuffer(r.take(8 * d0), dtype="<f8")
    d = dims[0]
    lo = np.frombuffer(r.take(8 * d), dtype="<f8")
    hi = np.frombuffer(r.take(8 * d), dtype="<f8")
    if r.off != len(r.data):
        raise _format_error("bad_header", f"{path}: trailing bytes in model file")
    return ReluNet(dims, params.copy()), AffineNormalizer(lo=lo.copy(), hi=hi.copy())


# sketch files --------------------------------------------------------------


def write_sketch(path, zhat, freqset: FrequencySet, count):
    zhat = np.asarray(zhat, dtype=np.complex128)
    if zhat.shape != (freqset.m,):
        raise _format_error("bad_header", "sketch length differs from frequency count")
    parts = [
        SKETCH_MAGIC,
        struct.pack(
            "<IIIQdQ",
            SKETCH_VERSION,
            freqset.d,
            freqset.m,
            int(count),
            float(freqset.scale),
            int(freqset.seed),
        ),
    ]
    interleaved = np.empty(2 * freqset.m, dtype="<f8")
    interleaved[0::2] = zhat.real
    interleaved[1::2] = zhat.imag
    parts.append(interleaved.tobytes())
    atomic_write(path, b"".join(parts))


def read_sketch(path):
    """Returns (zhat, freqset, count); frequencies rebuilt from the header."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(4) != SKETCH_MAGIC:
        raise _format_error("bad_magic", f"{path}: not a sketch file")
    version, d, m, count, scale, seed = r.unpack("IIIQdQ")
    if version != SKETCH_VERSION:
        raise _format_error("bad_version", f"{path}: unsupported sketch version {version}")
    if d < 1 or m < 1 or not scale > 0:
        raise _format_error("bad_header", f"{path}: malformed sketch header")
    raw = np.frombuffer(r.take(16 * m), dtype="<f8")
    if r.off != len(r.data):
        raise _format_error("bad_header", f"{path}: trailing bytes in sketch file")
    zhat = raw[0::2] + 1j * raw[1::2]
    return zhat, sample_frequencies(m, d, scale, seed), count


# PGM images ----------------------------------------------------------------


def write_pgm(path, img: GrayImage, plain=False):
    """8-bit PGM, P5 binary by default or P2 plain text."""
    pixels = np.clip(img.pixels, 0.0, 1.0)
    levels = np.rint(pixels * 255).astype(np.uint8)
    header = f"{'P2' if plain else 'P5'}\n{img.width} {img.height}\n255\n"
    if plain:
        body = "\n".join(" ".join(str(v) for v in row) for row in levels) + "\n"
        atomic_write(path, header.encode("ascii") + body.encode("ascii"))
    else:
        atomic_write(path, header.encode("ascii") + levels.tobytes())


def _pgm_token(data, off, path):
    """Next whitespace-delimited header token, skipping '#' comments."""
    while True:
        while off < len(data) and data[off : off + 1].isspace():
            off += 1
        if off < len(data) and data[off : off + 1] == b"#":
            nl = data.find(b"\n", off)
            if nl < 0:
                raise _format_error("bad_header", f"{path}: unterminated comment")
            off = nl + 1
            continue
        break
    start = off
    while off < len(data) and not data[off : off + 1].isspace():
        off += 1
    if start == off:
        raise _format_error("truncated", f"{path}: truncated header")
    return data[start:off], off


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic, off = _pgm_token(data, 0, path)
    if magic not in (b"P2", b"P5"):
        raise _format_error("bad_magic", f"{path}: not a PGM file")
    fields = []
    for _ in range(3):
        token, off = _pgm_token(data, off, path)
        try:
            fields.append(int(token))
        except ValueError:
            raise _format_error("bad_header", f"{path}: non-numeric PGM header") from None
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise _format_error("bad_header", f"{path}: malformed PGM header")
    if magic == b"P5":
        if maxval > 255:
            raise _format_error("bad_header", f"{path}: only 8-bit binary PGM supported")
        body = data[off + 1 :]
        if len(body) < width * height:
            raise _format_error("truncated", f"{path}: truncated PGM payload")
        levels = np.frombuffer(body[: width * height], dtype=np.uint8).astype(np.float64)
    else:
        try:
            values = [int(v) for v in data[off:].split()]
        except ValueError:
            raise _format_error("bad_header", f"{path}: non-numeric PGM sample") from None
        if len(values) < width * height:
            raise _format_error("truncated", f"{path}: truncated PGM payload")
        levels = np.asarray(values[: width * height], dtype=np.float64)
    pixels = (levels / maxval).reshape(height, width)
    return GrayImage(np.clip(pixels, 0.0, 1.0))


# CSV point clouds -----------------------------------------------------------


def write_pointcloud_csv(path, points):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lines = [",".join(f"{v:.17g}" for v in row) for row in points]
    atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_pointcloud_csv(path):
    try:
        points = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise _format_error("bad_header", f"{path}: malformed CSV ({exc})") from None
    return points


def stream_pointcloud_csv(path, chunk_rows=65536):
    """Yield (chunk, d) arrays without loading the whole file."""
    with open(path) as fh:
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise _format_error("bad_header", f"{path}: malformed CSV row") from None
            if len(rows) >= chunk_rows:
                yield np.asarray(rows, dtype=np.float64)
                rows = []
        if rows:
            yield np.asarray(rows, dtype=np.float64)
