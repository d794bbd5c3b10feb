"""Volumetric images, binary masks, and the NRRD subset used by the challenge data.

Arrays are indexed ``values[i, j, k]`` with ``i`` the fastest-varying axis on
disk (the first entry of the NRRD ``sizes`` field).
"""

from __future__ import annotations

import gzip
import os
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFile, InvalidGeometry, IoError, UnsupportedFormat

ORTHO_TOL = 1e-6
GEOMETRY_TOL = 1e-9

SUPPORTED_DTYPES = (np.uint8, np.int16, np.uint16, np.float32)

_NRRD_TYPES = {
    "uchar": np.uint8,
    "unsigned char": np.uint8,
    "uint8": np.uint8,
    "uint8_t": np.uint8,
    "short": np.int16,
    "short int": np.int16,
    "signed short": np.int16,
    "signed short int": np.int16,
    "int16": np.int16,
    "int16_t": np.int16,
    "ushort": np.uint16,
    "unsigned short": np.uint16,
    "unsigned short int": np.uint16,
    "uint16": np.uint16,
    "uint16_t": np.uint16,
    "float": np.float32,
}
_TYPE_NAMES = {np.dtype(np.uint8): "uint8", np.dtype(np.int16): "int16",
               np.dtype(np.uint16): "uint16", np.dtype(np.float32): "float"}


def _orthonormalize(direction):
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != (3, 3) or not np.all(np.isfinite(direction)):
        raise InvalidGeometry("direction must be a finite 3x3 matrix")
    err = np.abs(direction.T @ direction - np.eye(3)).max()
    if err > ORTHO_TOL:
        raise InvalidGeometry(f"direction matrix is not orthonormal (max error {err:.3g})")
    if err == 0.0:
        return direction
    # nearest orthonormal matrix (polar factor)
    u, _, vt = np.linalg.svd(direction)
    return u @ vt


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """3D scalar image with physical geometry.

    Parameters
    ----------
    values : np.ndarray
        Array of shape ``dims``; dtype one of uint8, int16, uint16, float32
        (float64 is accepted in memory and written as float32).
    spacing : sequence of 3 floats
        Voxel size in mm along each array axis.
    origin : sequence of 3 floats
        World position (mm) of the centre of voxel (0, 0, 0).
    direction : 3x3 array
        Columns are the world directions of the array axes.
    """

    values: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    direction: np.ndarray = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3 or min(values.shape) < 1:
            raise InvalidGeometry(f"expected a non-empty 3D array, got shape {values.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise InvalidGeometry("spacing and origin need 3 components")
        if not all(np.isfinite(spacing)) or min(spacing) <= 0:
            raise InvalidGeometry(f"spacing must be positive, got {spacing}")
        direction = np.eye(3) if self.direction is None else _orthonormalize(self.direction)
        direction = direction.copy()
        direction.setflags(write=False)
        values = self._check_values(values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    def _check_values(self, values):
        if values.dtype == np.float64:
            return values
        if values.dtype.type not in SUPPORTED_DTYPES:
            raise UnsupportedFormat(f"unsupported voxel type {values.dtype}")
        return values

    @property
    def dims(self):
        return tuple(int(n) for n in self.values.shape)

    def same_geometry(self, other, tol=GEOMETRY_TOL):
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=0, atol=tol)
            and np.allclose(self.origin, other.origin, rtol=0, atol=tol)
            and np.allclose(self.direction, other.direction, rtol=0, atol=tol)
        )

    def with_values(self, values):
        """Copy of this geometry carrying new voxel values."""
        return VoxelGrid(values, self.spacing, self.origin, self.direction)

    def affine(self):
        """4x4 homogeneous index-to-world matrix."""
        a = np.eye(4)
        a[:3, :3] = self.direction * np.asarray(self.spacing)
        a[:3, 3] = self.origin
        return a


class LabelMask(VoxelGrid):
    """Binary mask; values are stored as bool."""

    def _check_values(self, values):
        if values.dtype != bool:
            values = values > 0
        return values

    def with_values(self, values):
        return LabelMask(values, self.spacing, self.origin, self.direction)

    @classmethod
    def like(cls, grid, values):
        return cls(values, grid.spacing, grid.origin, grid.direction)


def index_to_world(grid, index):
    """Map (possibly fractional) voxel indices to world mm.

    ``index`` may be a single triple or an ``(n, 3)`` array.
    """
    idx = np.asarray(index, dtype=np.float64)
    scaled = idx * np.asarray(grid.spacing)
    return np.asarray(grid.origin) + scaled @ grid.direction.T


def world_to_index(grid, point):
    """Inverse of :func:`index_to_world`."""
    p = np.asarray(point, dtype=np.float64) - np.asarray(grid.origin)
    return (p @ grid.direction) / np.asarray(grid.spacing)


# --------------------------------------------------------------------------
# NRRD


def _parse_vector(text):
    text = text.strip()
    if text == "none":
        return None
    if not (text.startswith("(") and text.endswith(")")):
        raise CorruptFile(f"malformed vector {text!r}")
    try:
        return [float(v) for v in text[1:-1].split(",")]
    except ValueError as exc:
        raise CorruptFile(f"malformed vector {text!r}") from exc


def _parse_header(lines):
    fields = {}
    for line in lines:
        if not line or line.startswith("#"):
            continue
        if ":=" in line:
            continue  # key/value comments
        key, sep, value = line.partition(": ")
        if not sep:
            raise CorruptFile(f"malformed header line {line!r}")
        fields[key.strip().lower()] = value.strip()
    return fields


def _split_header(blob):
    # header ends at the first empty line
    hits = [(blob.find(sep), sep) for sep in (b"\n\n", b"\r\n\r\n")]
    hits = [h for h in hits if h[0] >= 0]
    if not hits:
        raise CorruptFile("no blank line terminating the NRRD header")
    pos, sep = min(hits)
    try:
        header = blob[:pos].decode("ascii")
    except UnicodeDecodeError as exc:
        raise CorruptFile("non-ASCII bytes in NRRD header") from exc
    return header.splitlines(), blob[pos + len(sep):]


def _geometry(fields, dims):
    if "space directions" in fields:
        parts = fields["space directions"].replace(") (", ")\t(").split("\t")
        vecs = [_parse_vector(p) for p in parts]
        if len(vecs) != 3 or any(v is None or len(v) != 3 for v in vecs):
            raise UnsupportedFormat("space directions must hold three 3-vectors")
        cols = np.array(vecs, dtype=np.float64).T
        spacing = np.linalg.norm(cols, axis=0)
        if np.any(spacing <= 0) or not np.all(np.isfinite(spacing)):
            raise InvalidGeometry("zero-length space direction")
        direction = cols / spacing
    else:
        direction = np.eye(3)
        spacing = np.ones(3)
        if "spacings" in fields:
            try:
                spacing = np.array([float(s) for s in fields["spacings"].split()])
            except ValueError as exc:
                raise CorruptFile("malformed spacings field") from exc
            if spacing.shape != (3,):
                raise CorruptFile("spacings needs three values")
    origin = np.zeros(3)
    if "space origin" in fields:
        vec = _parse_vector(fields["space origin"])
        if vec is None or len(vec) != 3:
            raise UnsupportedFormat("space origin must be a 3-vector")
        origin = np.array(vec)
    return tuple(spacing), tuple(origin), _orthonormalize(direction)


def read_nrrd(path, as_mask=None):
    """Read a 3D NRRD file with attached header (raw or gzip encoding).

    Parameters
    ----------
    path : str or path-like
    as_mask : bool, optional
        Return a :class:`LabelMask` (values binarized at > 0). Defaults to
        True for ``*.seg.nrrd`` files.
    """
    path = os.fspath(path)
    if as_mask is None:
        as_mask = path.endswith(".seg.nrrd")
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc

    magic = blob[:8]
    if magic[:4] != b"NRRD":
        raise UnsupportedFormat("missing NRRD magic")
    if magic[4:8] not in (b"0001", b"0002", b"0003", b"0004", b"0005"):
        raise UnsupportedFormat(f"unsupported NRRD version {magic!r}")
    lines, payload = _split_header(blob)
    fields = _parse_header(lines[1:])

    for key in ("dimension", "type", "sizes", "encoding"):
        if key not in fields:
            raise CorruptFile(f"missing required field {key!r}")
    if "data file" in fields or "datafile" in fields:
        raise UnsupportedFormat("detached data files are not supported")
    for key in ("line skip", "lineskip", "byte skip", "byteskip"):
        if key in fields and fields[key].strip() != "0":
            raise UnsupportedFormat(f"{key} is not supported")
    if fields["dimension"] != "3":
        raise UnsupportedFormat(f"dimension {fields['dimension']} (only 3 supported)")
    dtype = _NRRD_TYPES.get(fields["type"].lower())
    if dtype is None:
        raise UnsupportedFormat(f"unsupported type {fields['type']!r}")
    try:
        dims = tuple(int(s) for s in fields["sizes"].split())
    except ValueError as exc:
        raise CorruptFile("malformed sizes field") from exc
    if len(dims) != 3 or min(dims) < 1:
        raise CorruptFile(f"bad sizes {fields['sizes']!r}")
    encoding = fields["encoding"].lower()
    if encoding in ("gz", "gzip"):
        try:
            payload = gzip.decompress(payload)
        except (OSError, EOFError, zlib.error) as exc:
            raise CorruptFile(f"gzip payload could not be decoded: {exc}") from exc
    elif encoding != "raw":
        raise UnsupportedFormat(f"unsupported encoding {encoding!r}")
    endian = fields.get("endian", "little").lower()
    if endian not in ("little", "big"):
        raise UnsupportedFormat(f"unknown endianness {endian!r}")

    dt = np.dtype(dtype).newbyteorder("<" if endian == "little" else ">")
    expected = int(np.prod(dims)) * dt.itemsize
    if len(payload) != expected:
        raise CorruptFile(f"expected {expected} data bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype=dt).astype(dtype).reshape(dims, order="F")

    spacing, origin, direction = _geometry(fields, dims)
    cls = LabelMask if as_mask else VoxelGrid
    return cls(values, spacing, origin, direction)


def _fmt_vec(v):
    return "(" + ",".join(repr(float(x)) for x in v) + ")"


def write_nrrd(grid, path, encoding="gzip"):
    """Write ``grid`` as a NRRD0004 file with attached header.

    Masks are written as uint8 {0, 1}; float64 images are narrowed to float32.
    """
    if encoding not in ("raw", "gzip"):
        raise UnsupportedFormat(f"unsupported encoding {encoding!r}")
    values = grid.values
    if isinstance(grid, LabelMask):
        values = values.astype(np.uint8)
    elif values.dtype == np.float64:
        values = values.astype(np.float32)
    dtype = np.dtype(values.dtype)
    cols = grid.direction * np.asarray(grid.spacing)
    header = [
        "NRRD0004",
        "# written by segaeval",
        f"type: {_TYPE_NAMES[dtype]}",
        "dimension: 3",
        "space dimension: 3",
        "sizes: " + " ".join(str(n) for n in grid.dims),
        "space directions: " + " ".join(_fmt_vec(cols[:, a]) for a in range(3)),
        "kinds: domain domain domain",
        "endian: little",
        f"encoding: {encoding}",
        "space origin: " + _fmt_vec(grid.origin),
    ]
    data = np.ascontiguousarray(values.astype(dtype.newbyteorder("<")).ravel(order="F")).tobytes()
    if encoding == "gzip":
        # mtime pinned so output bytes depend only on content
        data = gzip.compress(data, compresslevel=6, mtime=0)
    try:
        with open(os.fspath(path), "wb") as fh:
            fh.write(("\n".join(header) + "\n\n").encode("ascii"))
            fh.write(data)
    except OSError as exc:
        raise IoError(str(exc)) from exc
