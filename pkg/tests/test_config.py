import math

import pytest

from spinphoton.config import (
    FORMAT_VERSION,
    apply_overrides,
    check_keys,
    dump_document,
    format_quantity,
    locate,
    parse_document,
    parse_override,
    parse_quantity,
    require_number,
)
from spinphoton.errors import ConfigError


@pytest.fixture
def document():
    return {
        "modes": {"A": {"fundamental": "22 GHz", "harmonic": 1, "tuning_range": 0.1}},
        "spins": {"A": {"gap": "19.84 GHz", "Gbar": "60 MHz", "mode": "A"}},
        "hops": [{"modes": ["A", "B"], "kappa": "25 MHz"}],
        "scenario": {"labels": ["00", "10"], "outputs": ["trajectory"]},
        "options": {"loss": False, "tolerance": 1e-10},
    }


class TestParseQuantity:
    def test_frequency_is_angular(self):
        assert parse_quantity("60 MHz", "frequency", "GHz", "x") == pytest.approx(
            2 * math.pi * 0.06
        )

    def test_bare_number_uses_default_unit(self):
        assert parse_quantity(5, "time", "ns", "x") == 5.0
        assert parse_quantity("25", "frequency", "MHz", "x") == pytest.approx(
            2 * math.pi * 0.025
        )

    def test_time_and_angle_units(self):
        assert parse_quantity("1 us", "time", "ns", "x") == pytest.approx(1000.0)
        assert parse_quantity("500 ps", "time", "ns", "x") == pytest.approx(0.5)
        assert parse_quantity("180 deg", "angle", "rad", "x") == pytest.approx(math.pi)

    def test_unknown_unit(self):
        with pytest.raises(ConfigError, match="modes.A.fundamental: unknown frequency unit"):
            parse_quantity("22 THz", "frequency", "GHz", "modes.A.fundamental")

    def test_wrong_kind_of_unit(self):
        with pytest.raises(ConfigError, match="unknown time unit"):
            parse_quantity("3 GHz", "time", "ns", "scenario.ramp")

    def test_rejects_garbage(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_quantity("fast GHz", "frequency", "GHz", "x")
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_quantity("1 2 GHz", "frequency", "GHz", "x")
        with pytest.raises(ConfigError, match="got a boolean"):
            parse_quantity(True, "time", "ns", "x")
        with pytest.raises(ConfigError, match="must be finite"):
            parse_quantity("inf ns", "time", "ns", "x")

    def test_format_is_inverse(self):
        value = 2 * math.pi * 12.5
        text = format_quantity(value, "frequency", "GHz")
        assert text.endswith(" GHz")
        assert parse_quantity(text, "frequency", "GHz", "x") == pytest.approx(value, rel=1e-15)


class TestDocument:
    def test_syntax_error_names_source(self):
        with pytest.raises(ConfigError, match="device.yaml"):
            parse_document("modes: [A\n", "device.yaml")

    def test_top_level_must_be_a_mapping(self):
        with pytest.raises(ConfigError, match="expected a mapping at the top level"):
            parse_document("- modes\n")
        assert parse_document("") == {}

    def test_unsupported_version(self):
        with pytest.raises(ConfigError, match="unsupported format_version"):
            parse_document("format_version: 2\n")

    def test_dump_carries_version(self):
        text = dump_document({"device": {"name": "x"}})
        assert parse_document(text) == {"format_version": FORMAT_VERSION, "device": {"name": "x"}}

    def test_exponents_without_a_dot(self):
        document = parse_document("options: {tolerance: 1e-10}\n")
        assert document["options"]["tolerance"] == "1e-10"
        assert require_number(document["options"]["tolerance"], "options.tolerance") == 1e-10
        with pytest.raises(ConfigError, match="options.tolerance: expected a number"):
            require_number("tight", "options.tolerance")

    def test_check_keys(self):
        table = {"mode": "A", "G": "60 MHz", "extra": 1}
        with pytest.raises(ConfigError, match=r"cpb.couplings.0: unknown key\(s\) extra"):
            check_keys(table, "cpb.couplings.0", required=("mode", "G"))
        with pytest.raises(ConfigError, match="cpb.couplings.0.transition: missing"):
            check_keys(table, "cpb.couplings.0", required=("transition",), optional=("mode",))
        with pytest.raises(ConfigError, match="expected a mapping"):
            check_keys([], "cpb")


class TestOverrides:
    def test_bare_number_keeps_unit(self, document):
        apply_overrides(document, {"spins.A.Gbar": "30"})
        assert document["spins"]["A"]["Gbar"] == "30 MHz"

    def test_explicit_unit(self, document):
        apply_overrides(document, {"hops.0.kappa": "0.05 GHz"})
        assert document["hops"][0]["kappa"] == "0.05 GHz"

    def test_typed_fields(self, document):
        apply_overrides(
            document,
            {
                "modes.A.harmonic": "2",
                "modes.A.tuning_range": "0.2",
                "options.loss": "true",
                "scenario.labels": "00, 01",
            },
        )
        assert document["modes"]["A"]["harmonic"] == 2
        assert document["modes"]["A"]["tuning_range"] == 0.2
        assert document["options"]["loss"] is True
        assert document["scenario"]["labels"] == ["00", "01"]

    def test_type_mismatch(self, document):
        with pytest.raises(ConfigError, match="modes.A.harmonic: expected an integer"):
            apply_overrides(document, {"modes.A.harmonic": "2.5"})
        with pytest.raises(ConfigError, match="expected true or false"):
            apply_overrides(document, {"options.loss": "yes"})
        with pytest.raises(ConfigError, match="expected a number with optional unit"):
            apply_overrides(document, {"spins.A.Gbar": "strong"})

    def test_missing_path(self, document):
        with pytest.raises(ConfigError, match="spins.B: no such config key"):
            apply_overrides(document, {"spins.B.Gbar": "30"})
        with pytest.raises(ConfigError, match="hops.3: no such list entry"):
            apply_overrides(document, {"hops.3.kappa": "30"})
        with pytest.raises(ConfigError, match="cannot descend"):
            apply_overrides(document, {"spins.A.Gbar.value": "30"})

    def test_locate(self, document):
        node, key = locate(document, "hops.0.kappa")
        assert key == "kappa"
        assert node is document["hops"][0]
        assert locate(document, "hops.0") == (document["hops"], 0)
        with pytest.raises(ConfigError, match="spins.A.gbar: no such config key"):
            locate(document, "spins.A.gbar")

    def test_parse_override(self):
        assert parse_override(" spins.A.Gbar = 30 ") == ("spins.A.Gbar", "30")
        assert parse_override("scenario.initial=|11>") == ("scenario.initial", "|11>")
        with pytest.raises(ConfigError, match="not of the form key=value"):
            parse_override("spins.A.Gbar")
