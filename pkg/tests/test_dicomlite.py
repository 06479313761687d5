import logging
import struct

import numpy as np
import pytest

from volumetrica import dicomlite as dl


def _implicit_bytes(elements):
    out = b""
    for (group, elem), value in elements:
        out += struct.pack("<HHI", group, elem, len(value)) + value
    return out


def _random_dataset(rng) -> dl.DicomDataset:
    rows, cols = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    px = rng.integers(0, 4000, size=(rows, cols)).astype(np.uint16)
    ds = dl.make_slice_dataset(
        px,
        pixel_spacing=(float(rng.uniform(0.2, 3.0)), float(rng.uniform(0.2, 3.0))),
        slice_thickness=float(rng.uniform(0.5, 5.0)),
        position_z=float(rng.uniform(-100, 100)),
        instance_number=int(rng.integers(1, 500)),
        rescale=(float(rng.uniform(0.5, 2.0)), float(rng.integers(-1024, 100))),
        signed=bool(rng.integers(0, 2)),
    )
    return ds


class TestRoundTrip:
    def test_minimal_dataset_roundtrip(self):
        px = np.arange(16, dtype=np.uint16).reshape(4, 4)
        ds = dl.make_slice_dataset(px)
        parsed = dl.parse_file(dl.write_file(ds))
        for tag, el in ds.elements.items():
            assert parsed.elements[tag].vr == el.vr
            assert parsed.elements[tag].value == el.value

    def test_hundred_randomized_files_bit_exact(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            ds = _random_dataset(rng)
            blob = dl.write_file(ds)
            blob2 = dl.write_file(dl.parse_file(blob))
            assert blob2 == blob

    def test_empty_dataset_is_valid_meta_only_file(self):
        blob = dl.write_file(dl.DicomDataset())
        parsed = dl.parse_file(blob)
        assert parsed.conformant
        assert all(tag[0] == 0x0002 for tag in parsed.elements)

    def test_odd_length_value_padded_and_logged(self, caplog):
        ds = dl.DicomDataset()
        ds.put((0x0008, 0x0060), "CS", b"CTX")  # odd length
        with caplog.at_level(logging.WARNING, logger="volumetrica.dicomlite"):
            blob = dl.write_file(ds)
        assert "padding odd-length" in caplog.text
        assert dl.parse_file(blob).get((0x0008, 0x0060)).value == b"CTX "

    def test_oversized_short_form_value_rejected(self):
        ds = dl.DicomDataset()
        ds.put((0x0008, 0x0060), "CS", b"x" * 70000)
        with pytest.raises(ValueError, match="length field"):
            dl.write_file(ds)


class TestParsing:
    def test_forced_mode_without_magic(self):
        raw = _implicit_bytes(
            [
                ((0x0028, 0x0010), struct.pack("<H", 16)),
                ((0x0028, 0x0011), struct.pack("<H", 16)),
            ]
        )
        ds = dl.parse_file(raw)
        assert not ds.conformant
        assert ds.transfer_syntax == dl.IMPLICIT_VR_LE
        assert ds.ushort(dl.TAG_ROWS) == 16

    def test_unsupported_transfer_syntax(self):
        px = np.zeros((2, 2), dtype=np.uint16)
        blob = bytearray(dl.write_file(dl.make_slice_dataset(px)))
        jpeg = b"1.2.840.10008.1.2.4.50"
        explicit = dl._pad_uid(dl.EXPLICIT_VR_LE)
        idx = bytes(blob).find(explicit)
        blob[idx : idx + len(explicit)] = jpeg.ljust(len(explicit), b"\x00")
        with pytest.raises(dl.UnsupportedTransferSyntaxError):
            dl.parse_file(bytes(blob))

    def test_truncated_value_reports_offset(self):
        raw = _implicit_bytes([((0x0028, 0x0010), struct.pack("<H", 16))])
        with pytest.raises(dl.TruncatedFileError) as err:
            dl.parse_file(raw[:-1])
        assert err.value.offset >= 0

    def test_truncation_fuzz_never_silent_garbage(self):
        rng = np.random.default_rng(9)
        ds = _random_dataset(rng)
        blob = dl.write_file(ds)
        reference = dl.parse_file(blob)
        for _ in range(60):
            cut = int(rng.integers(1, len(blob)))
            try:
                parsed = dl.parse_file(blob[:cut])
            except dl.DicomParseError:
                continue
            # a prefix that happens to parse must never invent elements
            assert set(parsed.elements) <= set(reference.elements)

    def test_implicit_vr_dataset_via_declared_syntax(self):
        # conformant file whose dataset body is implicit VR
        px = np.arange(4, dtype=np.uint16).reshape(2, 2)
        src = dl.make_slice_dataset(px)
        body = _implicit_bytes(
            [(el.tag, el.value) for el in src.sorted_elements()]
        )
        meta_ts = dl._pad_uid(dl.IMPLICIT_VR_LE)
        meta = (
            struct.pack("<HH", 2, 0x10)
            + b"UI"
            + struct.pack("<H", len(meta_ts))
            + meta_ts
        )
        group_len = struct.pack("<HH", 2, 0) + b"UL" + struct.pack("<H", 4) + struct.pack("<I", len(meta))
        blob = b"\x00" * 128 + b"DICM" + group_len + meta + body
        parsed = dl.parse_file(blob)
        assert parsed.conformant
        assert parsed.transfer_syntax == dl.IMPLICIT_VR_LE
        assert parsed.ushort(dl.TAG_ROWS) == 2


class TestReadSeries:
    def _slice(self, value, z=None, instance=None, spacing=(1.0, 1.0), thickness=1.0, shape=(4, 4)):
        px = np.full(shape, value, dtype=np.uint16)
        return dl.make_slice_dataset(
            px, pixel_spacing=spacing, slice_thickness=thickness,
            position_z=z, instance_number=instance,
        )

    def test_shuffled_slices_sorted_by_z(self):
        datasets = [self._slice(v, z=z) for v, z in [(3, 30.0), (1, 10.0), (2, 20.0)]]
        grid, geometry = dl.read_series(datasets)
        assert [i for i, _ in geometry.slice_order] == [1, 2, 0]
        assert list(grid.data[:, 0, 0]) == [1.0, 2.0, 3.0]

    def test_instance_number_fallback(self):
        datasets = [self._slice(v, instance=i) for v, i in [(2, 2), (1, 1), (3, 3)]]
        grid, geometry = dl.read_series(datasets)
        assert list(grid.data[:, 0, 0]) == [1.0, 2.0, 3.0]

    def test_equal_keys_keep_input_order(self):
        datasets = [self._slice(v, z=5.0) for v in (1, 2, 3)]
        _, geometry = dl.read_series(datasets)
        assert [i for i, _ in geometry.slice_order] == [0, 1, 2]

    def test_missing_spacing_defaults_with_warning(self):
        px = np.zeros((4, 4), dtype=np.uint16)
        ds = dl.make_slice_dataset(px, pixel_spacing=None, slice_thickness=None)
        grid, geometry = dl.read_series([ds])
        assert grid.spacing.as_tuple() == (1.0, 1.0, 1.0)
        assert any("assigning default values" in w for w in geometry.warnings)

    def test_empty_input_errors(self):
        with pytest.raises(dl.NoValidImagesError, match="No valid DICOM images found"):
            dl.read_series([])

    def test_dimension_mismatch(self):
        with pytest.raises(dl.GeometryMismatchError):
            dl.read_series([self._slice(1, shape=(4, 4)), self._slice(1, shape=(8, 8))])

    def test_rescale_applied_exactly(self):
        rng = np.random.default_rng(3)
        stored = rng.integers(0, 3000, size=(6, 6)).astype(np.uint16)
        slope, intercept = 1.25, -1024.0
        ds = dl.make_slice_dataset(stored, rescale=(slope, intercept))
        grid, _ = dl.read_series([ds])
        np.testing.assert_array_equal(grid.data[0], stored.astype(np.float64) * slope + intercept)

    def test_signed_pixels(self):
        stored = np.array([[-5, 7], [0, -1]], dtype=np.int16)
        ds = dl.make_slice_dataset(stored, signed=True)
        grid, _ = dl.read_series([ds])
        np.testing.assert_array_equal(grid.data[0], stored.astype(np.float64))

    def test_row_spacing_listed_first(self):
        # PixelSpacing is "row\col" = (sy, sx)
        ds = self._slice(1, spacing=(2.0, 0.5))
        grid, geometry = dl.read_series([ds])
        assert grid.spacing.sy == 2.0
        assert grid.spacing.sx == 0.5
        assert geometry.pixel_spacing == (0.5, 2.0)

    def test_nonuniform_z_flagged(self):
        datasets = [self._slice(1, z=0.0), self._slice(1, z=1.0), self._slice(1, z=3.0)]
        _, geometry = dl.read_series(datasets)
        assert not geometry.uniform_z
        assert any("non-uniform" in w for w in geometry.warnings)

    def test_nonpositive_pixel_spacing_rejected(self):
        ds = self._slice(1)
        ds.put(dl.TAG_PIXEL_SPACING, "DS", b"0\\1.0")
        with pytest.raises(dl.GeometryMismatchError, match="PixelSpacing"):
            dl.read_series([ds])

    def test_nonpositive_thickness_rejected(self):
        ds = self._slice(1)
        ds.put(dl.TAG_SLICE_THICKNESS, "DS", b"-2")
        with pytest.raises(dl.GeometryMismatchError, match="SliceThickness"):
            dl.read_series([ds])

    def test_slices_without_pixel_data_skipped_with_warning(self):
        good = self._slice(1, z=0.0)
        bad = dl.DicomDataset()
        bad.put(dl.TAG_ROWS, "US", np.uint16(4).tobytes())
        grid, geometry = dl.read_series([bad, good])
        assert grid.data.shape[0] == 1
        assert any("skipped" in w for w in geometry.warnings)
