"""Minimal single-file NIfTI-1 reader/writer.

Supports exactly what the toolkit consumes and produces: 3-D (or 4-D, for
multi-channel probability volumes) single-file images (magic ``n+1``),
optionally gzip-compressed, little- or big-endian, with the element kinds
uint8 / int16 / int32 (label data) and float32 / float64 (probabilities).
Orientation fields (qform/sform) are carried through opaquely and never
interpreted.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"

# NIfTI-1 datatype codes we accept.
_DTYPE_FROM_CODE = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
_CODE_FROM_KIND = {
    "u1": 2,
    "i2": 4,
    "i4": 8,
    "f4": 16,
    "f8": 64,
}

# Fixed 348-byte header layout (chars packed as unsigned bytes).
_HDR = struct.Struct(
    "<i10s18sih2B8h3f4h8f3fh2B4f2i80s24s2h3f3f4f4f4f16s4s"
)
assert _HDR.size == HEADER_SIZE


class NiftiError(ValueError):
    """Raised for unreadable or unsupported NIfTI files."""


@dataclass(frozen=True)
class OrientationInfo:
    """Opaque carrier for the header's spatial-orientation fields.

    Preserved verbatim on write-back; never used for computation.
    """

    qform_code: int = 0
    sform_code: int = 0
    quatern: tuple[float, float, float] = (0.0, 0.0, 0.0)
    qoffset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    srow_x: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    srow_y: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    srow_z: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    qfac: float = 1.0

    @staticmethod
    def default(spacing: tuple[float, float, float]) -> "OrientationInfo":
        dx, dy, dz = spacing
        return OrientationInfo(
            sform_code=1,
            srow_x=(dx, 0.0, 0.0, 0.0),
            srow_y=(0.0, dy, 0.0, 0.0),
            srow_z=(0.0, 0.0, dz, 0.0),
        )


@dataclass
class NiftiImage:
    """Decoded image: voxel array, spacing in mm, orientation fields."""

    data: np.ndarray  # 3-D (nx, ny, nz) or 4-D (nx, ny, nz, c)
    spacing: tuple[float, float, float]
    orientation: OrientationInfo = field(default_factory=OrientationInfo)


def _open_maybe_gzip(path: Path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.GzipFile(fileobj=fh) as gz:
                return gz.read()
        return fh.read()


def read(path: str | Path) -> NiftiImage:
    """Decode a single-file NIfTI-1 volume (optionally gzipped)."""
    path = Path(path)
    try:
        raw = _open_maybe_gzip(path)
    except OSError as exc:
        raise NiftiError(f"cannot read {path}: {exc}") from exc
    if len(raw) < HEADER_SIZE:
        raise NiftiError(f"{path}: truncated header ({len(raw)} bytes)")

    fields = _HDR.unpack(raw[:HEADER_SIZE])
    byteorder = "<"
    if fields[0] != HEADER_SIZE:
        swapped = struct.Struct(">" + _HDR.format[1:])
        fields = swapped.unpack(raw[:HEADER_SIZE])
        byteorder = ">"
        if fields[0] != HEADER_SIZE:
            raise NiftiError(f"{path}: not a NIfTI-1 file (sizeof_hdr)")

    dim = fields[7:15]
    datatype = fields[19]
    pixdim = fields[22:30]
    vox_offset = int(fields[30])
    scl_slope, scl_inter = fields[31], fields[32]
    magic = fields[65]

    if magic != MAGIC_SINGLE:
        raise NiftiError(f"{path}: unsupported magic {magic!r} (need single-file n+1)")

    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise NiftiError(f"{path}: invalid dim[0]={ndim}")
    sizes = [max(1, int(d)) for d in dim[1 : ndim + 1]]
    # Collapse trailing singleton dimensions; keep a real 4th (channel) axis.
    while len(sizes) > 3 and sizes[-1] == 1:
        sizes.pop()
    while len(sizes) < 3:
        sizes.append(1)
    if len(sizes) > 4:
        raise NiftiError(f"{path}: {len(sizes)}-D volumes are not supported")

    if datatype not in _DTYPE_FROM_CODE:
        raise NiftiError(f"{path}: unsupported element kind (datatype code {datatype})")
    dtype = _DTYPE_FROM_CODE[datatype].newbyteorder(byteorder)

    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(s <= 0 for s in spacing):
        raise NiftiError(f"{path}: non-positive spacing {spacing} in header")

    slope_set = scl_slope not in (0.0, 1.0) and not np.isnan(scl_slope)
    inter_set = scl_inter != 0.0 and not np.isnan(scl_inter)
    if slope_set or inter_set:
        raise NiftiError(
            f"{path}: intensity-scaled files (scl_slope/scl_inter) are not supported"
        )

    count = int(np.prod(sizes))
    offset = max(vox_offset, HEADER_SIZE)
    need = count * dtype.itemsize
    if len(raw) < offset + need:
        raise NiftiError(f"{path}: truncated data section")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = np.asarray(data, dtype=dtype.newbyteorder("="))
    data = data.reshape(sizes, order="F")

    orientation = OrientationInfo(
        qform_code=int(fields[44]),
        sform_code=int(fields[45]),
        quatern=tuple(float(v) for v in fields[46:49]),
        qoffset=tuple(float(v) for v in fields[49:52]),
        srow_x=tuple(float(v) for v in fields[52:56]),
        srow_y=tuple(float(v) for v in fields[56:60]),
        srow_z=tuple(float(v) for v in fields[60:64]),
        qfac=float(pixdim[0]) if pixdim[0] in (-1.0, 1.0) else 1.0,
    )
    return NiftiImage(data=data, spacing=spacing, orientation=orientation)


def write(img: NiftiImage, path: str | Path, compresslevel: int = 1) -> None:
    """Encode a volume as little-endian single-file NIfTI-1.

    Gzip is chosen from the ``.gz`` suffix; gzip output carries mtime=0 so
    identical volumes produce byte-identical files.
    """
    path = Path(path)
    data = np.asarray(img.data)
    if data.ndim not in (3, 4):
        raise NiftiError(f"can only write 3-D or 4-D volumes, got {data.ndim}-D")
    if data.dtype == np.bool_:
        data = data.astype(np.uint8)
    kind = data.dtype.str.lstrip("<>=|")
    if kind not in _CODE_FROM_KIND:
        raise NiftiError(f"unsupported element kind for writing: {data.dtype}")
    datatype = _CODE_FROM_KIND[kind]
    bitpix = data.dtype.itemsize * 8

    dim = [data.ndim, *data.shape] + [1] * (7 - data.ndim)
    ori = img.orientation
    pixdim = [ori.qfac, *img.spacing, 0.0, 0.0, 0.0, 0.0]
    header = _HDR.pack(
        HEADER_SIZE,
        b"", b"", 0, 0, 0, 0,
        *dim,
        0.0, 0.0, 0.0,
        0,  # intent_code
        datatype, bitpix,
        0,  # slice_start
        *pixdim,
        352.0,  # vox_offset
        1.0, 0.0,  # scl_slope, scl_inter
        0, 0,
        2,  # xyzt_units: millimetres
        0.0, 0.0, 0.0, 0.0,
        0, 0,
        b"liverseg", b"",
        ori.qform_code, ori.sform_code,
        *ori.quatern, *ori.qoffset,
        *ori.srow_x, *ori.srow_y, *ori.srow_z,
        b"", MAGIC_SINGLE,
    )
    payload = header + b"\x00" * 4 + np.ascontiguousarray(data.ravel(order="F")).tobytes()

    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        # filename="" and mtime=0 keep the gzip container byte-reproducible
        with open(path, "wb") as fh:
            with gzip.GzipFile(
                filename="", fileobj=fh, mode="wb", compresslevel=compresslevel, mtime=0
            ) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)
