"""NIfTI-1 subset reader/writer and cohort label CSV parsing.

Supports uncompressed and gzip-compressed single-file NIfTI-1
(348-byte header, 4-byte extension flag, payload at vox_offset) with
datatypes uint8/int16/float32/float64 in either endianness. Orientation
affines (qform/sform) are ignored; volumes are kept in stored axis
order, exposed as (z, y, x).
"""

from __future__ import annotations

import csv
import gzip
import zlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, DimMismatch, DuplicateId, MissingColumn, TruncatedData, UnsupportedDatatype
from .volume import Volume3D

HEADER_SIZE = 348
MIN_FILE_SIZE = 352  # header + 4-byte extension flag

_DTYPE_BY_CODE = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
_BITPIX_BY_CODE = {2: 8, 4: 16, 16: 32, 64: 64}


@dataclass(frozen=True)
class NiftiHeader:
    dims: tuple[int, ...]                      # (nx, ny, nz[, nt]) voxel counts
    pixdim: tuple[float, ...]                  # per-axis spacing, mm, same order
    datatype_code: int
    scl_slope: float
    scl_inter: float
    vox_offset: int
    endianness: str                            # "little" | "big"

    @property
    def zyx_dims(self) -> tuple[int, int, int]:
        nx, ny, nz = self.dims[:3]
        return (nz, ny, nx)

    @property
    def zyx_spacing(self) -> tuple[float, float, float]:
        dx, dy, dz = self.pixdim[:3]
        return (dz, dy, dx)


def read_nifti(data: bytes) -> tuple[NiftiHeader, Volume3D]:
    """Parse NIfTI-1 bytes into a header and a float32 (z, y, x) volume.

    Raw values are rescaled as slope*raw + inter (slope 0 treated as 1).
    """
    if len(data) >= 2 and data[0] == 0x1F and data[1] == 0x8B:
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError, zlib.error) as exc:
            raise TruncatedData(f"bad gzip stream: {exc}") from exc
    if len(data) < MIN_FILE_SIZE:
        raise TruncatedData(f"file has {len(data)} bytes, need >= {MIN_FILE_SIZE}")
    if data[344:348] != b"n+1\x00":
        raise BadMagic(f"bad magic {data[344:348]!r}")

    endian = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", data, 0)
    if sizeof_hdr != HEADER_SIZE:
        (sizeof_hdr,) = struct.unpack_from(">i", data, 0)
        if sizeof_hdr != HEADER_SIZE:
            raise BadMagic("sizeof_hdr is not 348 in either byte order")
        endian = ">"

    dim = struct.unpack_from(endian + "8h", data, 40)
    (datatype_code,) = struct.unpack_from(endian + "h", data, 70)
    pixdim = struct.unpack_from(endian + "8f", data, 76)
    (vox_offset_f,) = struct.unpack_from(endian + "f", data, 108)
    slope, inter = struct.unpack_from(endian + "2f", data, 112)

    ndim = dim[0]
    if ndim < 3 or ndim > 4:
        raise BadMagic(f"unsupported number of dimensions {ndim}")
    dims = tuple(int(d) for d in dim[1 : 1 + ndim])
    if any(d < 1 for d in dims):
        raise BadMagic(f"non-positive dimension in {dims}")
    if ndim == 4 and dims[3] != 1:
        raise UnsupportedDatatype("4-D volumes with nt > 1 are not supported")
    spacing = tuple(float(p) for p in pixdim[1 : 1 + ndim])
    if any(not np.isfinite(p) or p <= 0 for p in spacing[:3]):
        raise BadMagic(f"non-positive pixdim in {spacing}")

    if datatype_code not in _DTYPE_BY_CODE:
        raise UnsupportedDatatype(f"datatype code {datatype_code}")
    dtype = _DTYPE_BY_CODE[datatype_code].newbyteorder(endian)

    if not np.isfinite(vox_offset_f) or vox_offset_f < MIN_FILE_SIZE:
        raise BadMagic(f"invalid vox_offset {vox_offset_f}")
    vox_offset = int(vox_offset_f)

    nx, ny, nz = dims[:3]
    n_values = nx * ny * nz
    n_bytes = n_values * dtype.itemsize
    if len(data) < vox_offset + n_bytes:
        raise TruncatedData(
            f"need {vox_offset + n_bytes} bytes for payload, file has {len(data)}"
        )

    raw = np.frombuffer(data, dtype=dtype, count=n_values, offset=vox_offset)
    # x varies fastest on disk, so a C-order reshape to (nz, ny, nx) lands
    # directly in (z, y, x) indexing
    arr = raw.reshape(nz, ny, nx).astype(np.float32)
    if slope == 0.0 or not np.isfinite(slope):
        slope = 1.0
    if not np.isfinite(inter):
        inter = 0.0
    if slope != 1.0 or inter != 0.0:
        arr = arr * np.float32(slope) + np.float32(inter)

    header = NiftiHeader(
        dims=dims,
        pixdim=spacing,
        datatype_code=datatype_code,
        scl_slope=float(slope),
        scl_inter=float(inter),
        vox_offset=vox_offset,
        endianness="little" if endian == "<" else "big",
    )
    return header, Volume3D(arr, header.zyx_spacing)


def write_nifti(vol: Volume3D, header: NiftiHeader | None = None) -> bytes:
    """Serialize a volume as little-endian float32 NIfTI-1 bytes.

    The payload is written verbatim (slope 1, inter 0), so write->read is
    the identity on dims, spacing, and values.
    """
    nz, ny, nx = vol.dims
    if header is not None and header.zyx_dims != vol.dims:
        raise DimMismatch(f"header dims {header.zyx_dims} != volume dims {vol.dims}")

    buf = bytearray(MIN_FILE_SIZE)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    struct.pack_into("<8h", buf, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", buf, 70, 16)  # float32
    struct.pack_into("<h", buf, 72, 32)  # bitpix
    dz, dy, dx = vol.spacing
    struct.pack_into("<8f", buf, 76, 1.0, dx, dy, dz, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", buf, 108, float(MIN_FILE_SIZE))
    struct.pack_into("<2f", buf, 112, 1.0, 0.0)
    buf[344:348] = b"n+1\x00"
    payload = np.ascontiguousarray(vol.data, dtype="<f4").tobytes()
    return bytes(buf) + payload


def write_nifti_gz(vol: Volume3D) -> bytes:
    """Gzip-compressed variant of write_nifti (deterministic stream)."""
    raw = write_nifti(vol)
    out = io.BytesIO()
    with gzip.GzipFile(fileobj=out, mode="wb", mtime=0) as gz:
        gz.write(raw)
    return out.getvalue()


@dataclass
class CohortTable:
    """Subject ids with binary MGMT labels (1 = methylated)."""

    rows: list[tuple[str, int]]
    excluded: int = 0
    split_tag: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def n_positive(self) -> int:
        return sum(y for _, y in self.rows)

    def labels(self) -> dict[str, int]:
        return dict(self.rows)


def read_cohort_csv(text: str, id_col: str = "ID", label_col: str = "MGMT_value") -> CohortTable:
    """Parse a cohort CSV; rows with missing/invalid labels are excluded."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise MissingColumn("empty CSV")
    fields = [f.strip() for f in reader.fieldnames]
    if id_col not in fields or label_col not in fields:
        raise MissingColumn(f"CSV must contain columns {id_col!r} and {label_col!r}")

    rows: list[tuple[str, int]] = []
    seen: set[str] = set()
    excluded = 0
    for rec in reader:
        rec = {(k.strip() if k else k): v for k, v in rec.items()}
        sid = (rec.get(id_col) or "").strip()
        raw = (rec.get(label_col) or "").strip()
        if not sid:
            excluded += 1
            continue
        try:
            label = int(float(raw))
        except ValueError:
            excluded += 1
            continue
        if label not in (0, 1):
            excluded += 1
            continue
        if sid in seen:
            raise DuplicateId(f"duplicate subject id {sid!r}")
        seen.add(sid)
        rows.append((sid, label))
    return CohortTable(rows=rows, excluded=excluded)
