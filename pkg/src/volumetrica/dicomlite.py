"""Minimal DICOM reader/writer for CT slice series.

Covers just enough of the format to ingest a slice series: explicit and
implicit VR little endian, flat datasets (no sequences), one frame per
file. The writer produces conformant explicit-VR files for fixtures and
round-trip testing.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from volumetrica.grid import Spacing, VoxelGrid

logger = logging.getLogger(__name__)

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
IMPLICIT_VR_LE = "1.2.840.10008.1.2"

# tags touched by the ingestion path
TAG_META_GROUP_LENGTH = (0x0002, 0x0000)
TAG_META_VERSION = (0x0002, 0x0001)
TAG_MEDIA_SOP_CLASS = (0x0002, 0x0002)
TAG_MEDIA_SOP_INSTANCE = (0x0002, 0x0003)
TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
TAG_SOP_CLASS = (0x0008, 0x0016)
TAG_SOP_INSTANCE = (0x0008, 0x0018)
TAG_MODALITY = (0x0008, 0x0060)
TAG_SLICE_THICKNESS = (0x0018, 0x0050)
TAG_INSTANCE_NUMBER = (0x0020, 0x0013)
TAG_IMAGE_POSITION = (0x0020, 0x0032)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLUMNS = (0x0028, 0x0011)
TAG_PIXEL_SPACING = (0x0028, 0x0030)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_BITS_STORED = (0x0028, 0x0101)
TAG_HIGH_BIT = (0x0028, 0x0102)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

# VR dictionary for implicit-VR parsing of the tags above
_TAG_VR = {
    TAG_META_GROUP_LENGTH: "UL",
    TAG_META_VERSION: "OB",
    TAG_MEDIA_SOP_CLASS: "UI",
    TAG_MEDIA_SOP_INSTANCE: "UI",
    TAG_TRANSFER_SYNTAX: "UI",
    TAG_SOP_CLASS: "UI",
    TAG_SOP_INSTANCE: "UI",
    TAG_MODALITY: "CS",
    TAG_SLICE_THICKNESS: "DS",
    TAG_INSTANCE_NUMBER: "IS",
    TAG_IMAGE_POSITION: "DS",
    TAG_ROWS: "US",
    TAG_COLUMNS: "US",
    TAG_PIXEL_SPACING: "DS",
    TAG_BITS_ALLOCATED: "US",
    TAG_BITS_STORED: "US",
    TAG_HIGH_BIT: "US",
    TAG_PIXEL_REPRESENTATION: "US",
    TAG_RESCALE_INTERCEPT: "DS",
    TAG_RESCALE_SLOPE: "DS",
    TAG_PIXEL_DATA: "OW",
}

SUPPORTED_VRS = frozenset(
    {"US", "SS", "IS", "DS", "CS", "UI", "LO", "OW", "OB", "UL", "UN"}
)
# VRs serialized with the 4-byte length form in explicit VR
_LONG_VRS = frozenset({"OB", "OW", "OF", "SQ", "UT", "UN"})
_STRING_VRS = frozenset({"IS", "DS", "CS", "LO"})


class DicomParseError(ValueError):
    """File bytes do not parse under the supported subset."""


class UnsupportedTransferSyntaxError(DicomParseError):
    pass


class TruncatedFileError(DicomParseError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NoValidImagesError(ValueError):
    pass


class GeometryMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class DicomElement:
    tag: tuple[int, int]
    vr: str
    value: bytes


@dataclass
class DicomDataset:
    """Flat tag -> element map plus the declared transfer syntax."""

    elements: dict[tuple[int, int], DicomElement] = field(default_factory=dict)
    transfer_syntax: str = EXPLICIT_VR_LE
    conformant: bool = True

    def put(self, tag, vr: str, value: bytes) -> None:
        self.elements[tuple(tag)] = DicomElement(tuple(tag), vr, bytes(value))

    def __contains__(self, tag) -> bool:
        return tuple(tag) in self.elements

    def get(self, tag) -> DicomElement | None:
        return self.elements.get(tuple(tag))

    def sorted_elements(self) -> list[DicomElement]:
        return [self.elements[t] for t in sorted(self.elements)]

    # -- typed value accessors -------------------------------------------
    def ushort(self, tag) -> int | None:
        el = self.get(tag)
        if el is None:
            return None
        return struct.unpack("<H", el.value[:2])[0]

    def text(self, tag) -> str | None:
        el = self.get(tag)
        if el is None:
            return None
        return el.value.decode("ascii", errors="replace").rstrip("\x00 ")

    def numbers(self, tag) -> list[float] | None:
        """DS/IS multi-valued numeric content, backslash separated."""
        raw = self.text(tag)
        if raw is None or raw.strip() == "":
            return None
        return [float(part) for part in raw.split("\\")]


def _parse_element(data: bytes, pos: int, explicit: bool):
    """Parse one element at pos; returns (element, new_pos)."""
    n = len(data)
    if pos + 8 > n:
        raise TruncatedFileError("element header runs past end of data", pos)
    group, elem = struct.unpack_from("<HH", data, pos)
    if explicit:
        vr = data[pos + 4 : pos + 6].decode("ascii", errors="replace")
        if not vr.isalpha() or not vr.isupper():
            raise DicomParseError(
                f"invalid VR {vr!r} for tag ({group:04X},{elem:04X}) at offset {pos}"
            )
        if vr in _LONG_VRS:
            if pos + 12 > n:
                raise TruncatedFileError("long-form length runs past end of data", pos)
            (length,) = struct.unpack_from("<I", data, pos + 8)
            body = pos + 12
        else:
            (length,) = struct.unpack_from("<H", data, pos + 6)
            body = pos + 8
    else:
        (length,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        vr = _TAG_VR.get((group, elem), "UN")
    if length == 0xFFFFFFFF:
        raise DicomParseError(
            f"undefined-length element ({group:04X},{elem:04X}) not supported (flat datasets only)"
        )
    if body + length > n:
        raise TruncatedFileError(
            f"value of ({group:04X},{elem:04X}) declared {length} bytes but data ends", body
        )
    return DicomElement((group, elem), vr, data[body : body + length]), body + length


def parse_file(data: bytes) -> DicomDataset:
    """Parse one DICOM file.

    Conformant files (128-byte preamble + "DICM" + explicit-VR meta
    group) may declare explicit or implicit VR little endian for the
    dataset. Without the magic the whole stream is retried as a raw
    implicit-VR dataset ("forced" mode) and flagged non-conformant.
    """
    data = bytes(data)
    ds = DicomDataset()
    if len(data) >= 132 and data[128:132] == b"DICM":
        pos = 132
        meta_end = None
        while pos < len(data):
            if meta_end is not None and pos >= meta_end:
                break
            group = struct.unpack_from("<H", data, pos)[0] if pos + 2 <= len(data) else None
            if group != 0x0002:
                break
            el, pos = _parse_element(data, pos, explicit=True)
            ds.elements[el.tag] = el
            if el.tag == TAG_META_GROUP_LENGTH:
                meta_end = pos + struct.unpack("<I", el.value)[0]
        syntax = ds.text(TAG_TRANSFER_SYNTAX) or EXPLICIT_VR_LE
        if syntax not in (EXPLICIT_VR_LE, IMPLICIT_VR_LE):
            raise UnsupportedTransferSyntaxError(
                f"transfer syntax {syntax!r} not supported (explicit/implicit VR little endian only)"
            )
        ds.transfer_syntax = syntax
        explicit = syntax == EXPLICIT_VR_LE
        while pos < len(data):
            el, pos = _parse_element(data, pos, explicit=explicit)
            ds.elements[el.tag] = el
        return ds

    # forced mode: no preamble/magic, assume raw implicit VR little endian
    ds.conformant = False
    ds.transfer_syntax = IMPLICIT_VR_LE
    pos = 0
    while pos < len(data):
        el, pos = _parse_element(data, pos, explicit=False)
        ds.elements[el.tag] = el
    return ds


def _pad_value(el: DicomElement) -> bytes:
    value = el.value
    if len(value) % 2 == 0:
        return value
    pad = b" " if el.vr in _STRING_VRS else b"\x00"
    logger.warning(
        "padding odd-length value of (%04X,%04X) %s to even length",
        el.tag[0],
        el.tag[1],
        el.vr,
    )
    return value + pad


def _encode_element(el: DicomElement) -> bytes:
    value = _pad_value(el)
    if len(value) > 0xFFFFFFFE:
        raise ValueError(f"value of {el.tag} exceeds the 32-bit length field")
    head = struct.pack("<HH", *el.tag)
    vr = el.vr.encode("ascii")
    if el.vr in _LONG_VRS:
        return head + vr + b"\x00\x00" + struct.pack("<I", len(value)) + value
    if len(value) > 0xFFFF:
        raise ValueError(
            f"value of {el.tag} ({len(value)} bytes) exceeds the short length field for VR {el.vr}"
        )
    return head + vr + struct.pack("<H", len(value)) + value


def write_file(ds: DicomDataset) -> bytes:
    """Serialize as preamble + DICM + explicit-VR-LE meta and dataset."""
    meta: dict[tuple[int, int], DicomElement] = {}
    body: list[DicomElement] = []
    for el in ds.sorted_elements():
        if el.tag[0] == 0x0002:
            meta[el.tag] = el
        else:
            body.append(el)
    meta.setdefault(TAG_META_VERSION, DicomElement(TAG_META_VERSION, "OB", b"\x00\x01"))
    meta[TAG_TRANSFER_SYNTAX] = DicomElement(
        TAG_TRANSFER_SYNTAX, "UI", _pad_uid(EXPLICIT_VR_LE)
    )
    meta_payload = b"".join(
        _encode_element(meta[t]) for t in sorted(meta) if t != TAG_META_GROUP_LENGTH
    )
    group_len = DicomElement(TAG_META_GROUP_LENGTH, "UL", struct.pack("<I", len(meta_payload)))
    out = [b"\x00" * 128, b"DICM", _encode_element(group_len), meta_payload]
    out.extend(_encode_element(el) for el in body)
    return b"".join(out)


def _pad_uid(uid: str) -> bytes:
    raw = uid.encode("ascii")
    return raw + b"\x00" if len(raw) % 2 else raw


def _encode_text(value: str) -> bytes:
    raw = value.encode("ascii")
    return raw + b" " if len(raw) % 2 else raw


def make_slice_dataset(
    pixels: np.ndarray,
    pixel_spacing: tuple[float, float] | None = (1.0, 1.0),
    slice_thickness: float | None = 1.0,
    position_z: float | None = None,
    instance_number: int | None = None,
    rescale: tuple[float, float] | None = None,
    signed: bool = False,
) -> DicomDataset:
    """Build a single-slice CT dataset around a 2-D uint16/int16 array.

    Fixture generator: pixel_spacing is (row, col) mm per DICOM
    convention; pass None to omit the geometry tags.
    """
    px = np.asarray(pixels)
    if px.ndim != 2:
        raise ValueError("pixels must be 2-D (rows, cols)")
    dtype = "<i2" if signed else "<u2"
    raw = np.ascontiguousarray(px.astype(dtype)).tobytes()
    ds = DicomDataset()
    ds.put(TAG_MODALITY, "CS", b"CT")
    ds.put(TAG_ROWS, "US", struct.pack("<H", px.shape[0]))
    ds.put(TAG_COLUMNS, "US", struct.pack("<H", px.shape[1]))
    ds.put(TAG_BITS_ALLOCATED, "US", struct.pack("<H", 16))
    ds.put(TAG_BITS_STORED, "US", struct.pack("<H", 16))
    ds.put(TAG_HIGH_BIT, "US", struct.pack("<H", 15))
    ds.put(TAG_PIXEL_REPRESENTATION, "US", struct.pack("<H", 1 if signed else 0))
    if pixel_spacing is not None:
        ds.put(TAG_PIXEL_SPACING, "DS", _encode_text(f"{pixel_spacing[0]:g}\\{pixel_spacing[1]:g}"))
    if slice_thickness is not None:
        ds.put(TAG_SLICE_THICKNESS, "DS", _encode_text(f"{slice_thickness:g}"))
    if position_z is not None:
        ds.put(TAG_IMAGE_POSITION, "DS", _encode_text(f"0\\0\\{position_z:g}"))
    if instance_number is not None:
        ds.put(TAG_INSTANCE_NUMBER, "IS", _encode_text(str(instance_number)))
    if rescale is not None:
        ds.put(TAG_RESCALE_SLOPE, "DS", _encode_text(f"{rescale[0]:g}"))
        ds.put(TAG_RESCALE_INTERCEPT, "DS", _encode_text(f"{rescale[1]:g}"))
    ds.put(TAG_PIXEL_DATA, "OW", raw)
    return ds


@dataclass(frozen=True)
class SeriesGeometry:
    rows: int
    cols: int
    pixel_spacing: tuple[float, float]  # (sx, sy) mm
    slice_thickness: float
    slice_order: tuple[tuple[int, float], ...]  # (input index, sort key)
    warnings: tuple[str, ...] = ()
    uniform_z: bool = True

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("rows and cols must be positive")
        if min(self.pixel_spacing) <= 0 or self.slice_thickness <= 0:
            raise ValueError("spacing components must be positive")


def _decode_pixels(ds: DicomDataset) -> np.ndarray:
    rows = ds.ushort(TAG_ROWS)
    cols = ds.ushort(TAG_COLUMNS)
    bits = ds.ushort(TAG_BITS_ALLOCATED) or 16
    signed = (ds.ushort(TAG_PIXEL_REPRESENTATION) or 0) == 1
    if bits == 8:
        dtype = np.int8 if signed else np.uint8
    elif bits == 16:
        dtype = np.dtype("<i2") if signed else np.dtype("<u2")
    else:
        raise DicomParseError(f"BitsAllocated {bits} not supported")
    raw = ds.get(TAG_PIXEL_DATA).value
    need = rows * cols * (bits // 8)
    if len(raw) < need:
        raise DicomParseError(f"pixel data has {len(raw)} bytes, expected {need}")
    stored = np.frombuffer(raw[:need], dtype=dtype).reshape(rows, cols)
    slope_vals = ds.numbers(TAG_RESCALE_SLOPE)
    inter_vals = ds.numbers(TAG_RESCALE_INTERCEPT)
    slope = slope_vals[0] if slope_vals else 1.0
    intercept = inter_vals[0] if inter_vals else 0.0
    return stored.astype(np.float64) * slope + intercept


def read_series(datasets: list[DicomDataset]) -> tuple[VoxelGrid, SeriesGeometry]:
    """Assemble sorted slices into a voxel grid.

    Slices sort by the z component of ImagePositionPatient when every
    slice carries it, else by InstanceNumber, else input order; equal
    keys keep input order. Missing PixelSpacing/SliceThickness default
    to 1.0 mm with a recorded warning.
    """
    usable: list[tuple[int, DicomDataset]] = []
    warnings: list[str] = []
    for i, ds in enumerate(datasets):
        if TAG_PIXEL_DATA not in ds or TAG_ROWS not in ds or TAG_COLUMNS not in ds:
            warnings.append(f"slice {i}: missing pixel data or dimensions, skipped")
            continue
        usable.append((i, ds))
    if not usable:
        raise NoValidImagesError("No valid DICOM images found")

    rows = usable[0][1].ushort(TAG_ROWS)
    cols = usable[0][1].ushort(TAG_COLUMNS)
    for i, ds in usable:
        if ds.ushort(TAG_ROWS) != rows or ds.ushort(TAG_COLUMNS) != cols:
            raise GeometryMismatchError(
                f"slice {i} is {ds.ushort(TAG_ROWS)}x{ds.ushort(TAG_COLUMNS)}, "
                f"series is {rows}x{cols}"
            )

    z_keys = [ds.numbers(TAG_IMAGE_POSITION) for _, ds in usable]
    if all(v is not None and len(v) >= 3 for v in z_keys):
        keys = [v[2] for v in z_keys]
    else:
        inst = [ds.numbers(TAG_INSTANCE_NUMBER) for _, ds in usable]
        if all(v is not None for v in inst):
            keys = [v[0] for v in inst]
        else:
            keys = [float(order) for order in range(len(usable))]
    order = sorted(range(len(usable)), key=lambda j: keys[j])

    first = usable[order[0]][1]
    spacing_vals = first.numbers(TAG_PIXEL_SPACING)
    if spacing_vals is None or len(spacing_vals) < 2 or min(spacing_vals) <= 0:
        if spacing_vals is not None and min(spacing_vals) <= 0:
            raise GeometryMismatchError(f"non-positive PixelSpacing {spacing_vals}")
        warnings.append("PixelSpacing missing: assigning default values (1.0, 1.0) mm")
        sy, sx = 1.0, 1.0
    else:
        sy, sx = spacing_vals[0], spacing_vals[1]  # row spacing first
    thick_vals = first.numbers(TAG_SLICE_THICKNESS)
    if thick_vals is None or thick_vals[0] <= 0:
        if thick_vals is not None and thick_vals[0] <= 0:
            raise GeometryMismatchError(f"non-positive SliceThickness {thick_vals}")
        warnings.append("SliceThickness missing: assigning default values (1.0 mm)")
        thickness = 1.0
    else:
        thickness = thick_vals[0]

    uniform_z = True
    sorted_keys = [keys[j] for j in order]
    if len(sorted_keys) > 2:
        gaps = np.diff(sorted_keys)
        if gaps.max() - gaps.min() > 1e-6 * max(abs(gaps).max(), 1.0):
            uniform_z = False
            warnings.append("non-uniform z gaps between slices; series flagged, not resampled")

    slices = [_decode_pixels(usable[j][1]) for j in order]
    grid = VoxelGrid(np.stack(slices), Spacing(sx, sy, thickness))
    geometry = SeriesGeometry(
        rows=rows,
        cols=cols,
        pixel_spacing=(sx, sy),
        slice_thickness=thickness,
        slice_order=tuple((usable[j][0], keys[j]) for j in order),
        warnings=tuple(warnings),
        uniform_z=uniform_z,
    )
    return grid, geometry
