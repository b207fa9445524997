"""Tests for memory.py: state counts, granularity and the layer table."""

import pytest

from sgc.errors import ConfigError, InputError
from sgc.memory import (
    LayerShape,
    MethodSpec,
    account,
    granularity,
    memory_table,
    projection_overhead,
    read_manifest,
)

SQUARE = LayerShape.square(4096)


class TestStateCounts:
    def test_galore_and_lora(self):
        assert account(SQUARE, MethodSpec("GaLore", rank_r=1)).optimizer_states == 8192
        assert account(SQUARE, MethodSpec("LoRA", rank_r=1)).optimizer_states == 16384

    def test_mesgc_minimum_setting(self):
        spec = MethodSpec("MESGC", s_c=1, c=64, kappa=7)
        assert account(SQUARE, spec).optimizer_states == 896

    def test_mesgc_many_chunks(self):
        spec = MethodSpec("MESGC", s_c=1, c=256, kappa=8)
        assert account(SQUARE, spec).optimizer_states == 4096

    def test_full_finetuning(self):
        report = account(LayerShape(3, 5), MethodSpec("FullFT"))
        assert (report.weights, report.optimizer_states, report.projection_storage) == (15, 30, 0)

    def test_table_rows(self):
        d = SQUARE.d
        cesgc = account(SQUARE, MethodSpec("CESGC", rank_r=2, s_c=1, c=64, kappa=8))
        assert (cesgc.weights, cesgc.projection_storage) == (d, 2 * 4096)
        lora = account(SQUARE, MethodSpec("LoRA", rank_r=2))
        assert lora.weights == d + 2 * 2 * 4096
        galore = account(SQUARE, MethodSpec("GaLore", rank_r=2))
        assert galore.projection_storage == 2 * 4096

    def test_non_square_layer(self):
        shape = LayerShape(512, 2048)
        galore = account(shape, MethodSpec("GaLore", rank_r=4))
        assert galore.optimizer_states == 2 * 4 * 2048
        assert galore.projection_storage == 4 * 512
        lora = account(shape, MethodSpec("LoRA", rank_r=4))
        assert lora.optimizer_states == 2 * 4 * (512 + 2048)

    def test_minimum_states(self):
        report = account(SQUARE, MethodSpec("MESGC", s_c=4, c=64, kappa=7))
        assert report.min_states == 896

    def test_bytes(self):
        report = account(LayerShape(2, 2), MethodSpec("FullFT"))
        assert report.bytes() == 12 * 4
        assert report.bytes(element_width=2) == 12 * 2


class TestGranularity:
    def test_cesgc(self):
        assert granularity(SQUARE, MethodSpec("CESGC", rank_r=1, s_c=1, c=64, kappa=8)) == (512, 1024)

    def test_galore(self):
        assert granularity(SQUARE, MethodSpec("GaLore", rank_r=1))[1] == 8192

    def test_lora(self):
        assert granularity(SQUARE, MethodSpec("LoRA", rank_r=1))[1] == 16384

    def test_full_finetuning_has_no_free_integer(self):
        assert granularity(SQUARE, MethodSpec("FullFT")) == (0, 0)


class TestProjectionOverhead:
    def test_measurement_matrix_storage(self):
        spec = MethodSpec("MESGC", s_c=2, c=4, kappa=8)
        shape = LayerShape(16, 16)
        assert projection_overhead(shape, spec) == 0
        assert projection_overhead(shape, spec, include_A=True) == spec.k * (256 // 4)

    def test_include_a_outside_family(self):
        with pytest.raises(ConfigError):
            projection_overhead(SQUARE, MethodSpec("GaLore", rank_r=1), include_A=True)


class TestSpecs:
    def test_missing_fields(self):
        with pytest.raises(ConfigError):
            MethodSpec("MESGC", s_c=1, c=4)
        with pytest.raises(ConfigError):
            MethodSpec("LoRA")

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            MethodSpec("Adafactor")

    def test_non_positive_field(self):
        with pytest.raises(ConfigError):
            MethodSpec("GaLore", rank_r=0)

    def test_bad_shape(self):
        with pytest.raises(ConfigError):
            LayerShape(0, 4)


class TestManifest:
    def test_read(self, tmp_path):
        path = tmp_path / "layers.txt"
        path.write_text("# attention\n512 512\n\n512 2048  # mlp\n")
        assert read_manifest(str(path)) == [LayerShape(512, 512), LayerShape(512, 2048)]

    def test_malformed(self, tmp_path):
        path = tmp_path / "layers.txt"
        path.write_text("512\n")
        with pytest.raises(InputError):
            read_manifest(str(path))

    def test_missing(self, tmp_path):
        with pytest.raises(InputError):
            read_manifest(str(tmp_path / "nope.txt"))

    def test_table(self):
        specs = [MethodSpec("FullFT"), MethodSpec("GaLore", rank_r=1)]
        table = memory_table([LayerShape(4, 4), LayerShape(2, 8)], specs)
        assert len(table) == 4
        assert list(table.columns) == [
            "layer", "m", "n", "method", "weights", "states", "projection",
            "min", "granularity", "granularity_total", "bytes",
        ]
        assert table.loc[0, "states"] == 32
