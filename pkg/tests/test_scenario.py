from pathlib import Path

import pytest

from lorawansim.scenario import ScenarioError, parse_scenario, render_scenario

SCENARIOS_DIR = Path(__file__).resolve().parent.parent / "scenarios"

MINIMAL = """
version: 1
gateways:
  - location: {x: 0, y: 0}
devices:
  - location: {x: 0, y: 50}
"""


def test_minimal_scenario_gets_defaults():
    spec = parse_scenario(MINIMAL)
    assert spec.seed == 0
    assert spec.length_s == 60.0
    assert spec.tick_s == 1e-6
    assert spec.uplink.frequency_hz == 868_100_000 and spec.uplink.sf == 7
    assert spec.rx_windows.rx1_delay_s == 1.0
    assert spec.rx_windows.rx2_frequency_hz == 869_525_000
    (gw,) = spec.gateways
    assert gw.id == "gw-0"
    (dev,) = spec.devices
    assert dev.id == "dev-0"
    assert dev.activation == "otaa" and dev.otaa is not None
    assert len(dev.otaa.app_key) == 16


def test_empty_document_is_valid():
    spec = parse_scenario("")
    assert spec.devices == () and spec.gateways == ()


def test_derived_credentials_are_deterministic():
    a = parse_scenario(MINIMAL)
    b = parse_scenario(MINIMAL)
    assert a.devices[0].otaa == b.devices[0].otaa


def test_duplicate_device_id_rejected():
    text = """
gateways: [{location: {x: 0, y: 0}}]
devices:
  - {id: node, location: {x: 0, y: 1}}
  - {id: node, location: {x: 0, y: 2}}
"""
    with pytest.raises(ScenarioError, match="node"):
        parse_scenario(text)


def test_odd_length_payload_hex_rejected():
    text = """
devices:
  - location: {x: 0, y: 1}
    traffic: {period_s: 10, payload_hex: "abc"}
"""
    with pytest.raises(ScenarioError, match="payload_hex"):
        parse_scenario(text)


def test_unknown_key_rejected_with_path():
    text = """
devices:
  - location: {x: 0, y: 1}
    trafic: {period_s: 10}
"""
    with pytest.raises(ScenarioError, match=r"devices\[0\].trafic"):
        parse_scenario(text)


def test_unknown_member_rejected():
    text = """
devices:
  - {id: a, location: {x: 0, y: 1}, class: C}
multicast_groups:
  - mc_addr: "00ff0001"
    nwk_skey: "00112233445566778899aabbccddeeff"
    app_skey: "00112233445566778899aabbccddeeff"
    members: [a, ghost]
"""
    with pytest.raises(ScenarioError, match="ghost"):
        parse_scenario(text)


def test_bad_class_and_activation_rejected():
    with pytest.raises(ScenarioError, match="class"):
        parse_scenario("devices: [{location: {x: 0, y: 1}, class: B}]")
    with pytest.raises(ScenarioError, match="activation"):
        parse_scenario("devices: [{location: {x: 0, y: 1}, activation: magic}]")


def test_version_mismatch_rejected():
    with pytest.raises(ScenarioError, match="version"):
        parse_scenario("version: 99")


def test_reply_app_requires_reply_hex():
    with pytest.raises(ScenarioError, match="reply_hex"):
        parse_scenario("server_apps: [{fport: 1, type: reply}]")


def test_firmware_device_cannot_carry_traffic():
    text = """
devices:
  - location: {x: 0, y: 1}
    firmware: ping.so
    traffic: {period_s: 10}
"""
    with pytest.raises(ScenarioError, match="firmware"):
        parse_scenario(text)


def test_phy_overrides_applied():
    text = """
phy:
  pathloss: {pl0_db: 60.0, gamma: 2.0}
  collision:
    capture_threshold_db: 3.0
    sensitivity_dbm:
      - {sf: 7, bw_hz: 125000, dbm: -120.0}
"""
    spec = parse_scenario(text)
    assert spec.pathloss.pl0_db == 60.0
    assert spec.collision.capture_threshold_db == 3.0
    assert spec.collision.sensitivity_dbm[(7, 125_000)] == -120.0
    assert spec.collision.sensitivity_dbm[(8, 125_000)] == -126.0


def test_roundtrip_identity_bundled_and_generated():
    for text in [MINIMAL, (SCENARIOS_DIR / "ping_pong.yaml").read_text(),
                 (SCENARIOS_DIR / "dense_24h.yaml").read_text()]:
        spec = parse_scenario(text)
        assert parse_scenario(render_scenario(spec)) == spec


def test_roundtrip_identity_with_all_sections():
    text = """
version: 1
seed: 9
length_s: 300.0
rx_windows: {rx1_delay_s: 1.0, rx2_delay_s: 2.0}
uplink: {sf: 9, tx_power_dbm: 10.0}
gateways:
  - {id: g, location: {x: 1.5, y: -2.0, z: 10.0}}
devices:
  - id: a
    location: {x: 0, y: 1}
    class: C
    activation: abp
    traffic: {period_s: 60.0, fport: 2, payload_hex: "00ff", confirmed: true}
  - id: b
    location: {x: 0, y: 2}
server_apps:
  - {fport: 2, type: sink}
multicast_groups:
  - mc_addr: "00ff0001"
    nwk_skey: "00112233445566778899aabbccddeeff"
    app_skey: "ffeeddccbbaa99887766554433221100"
    members: [a]
"""
    spec = parse_scenario(text)
    assert parse_scenario(render_scenario(spec)) == spec
    assert spec.devices[0].abp is not None
    assert spec.devices[0].traffic.confirmed is True


def test_roundtrip_identity_generated_specs():
    # Random scenario generator: parse(render(spec)) == spec must hold for
    # arbitrary generated specs, not just the bundled ones.
    import random as _random

    rng = _random.Random(123)
    for _ in range(10):
        n_dev = rng.randrange(1, 5)
        lines = [f"seed: {rng.randrange(0, 1000)}",
                 f"length_s: {rng.choice([10.0, 60.0, 600.0])}",
                 "gateways:"]
        for g in range(rng.randrange(1, 3)):
            lines.append(f"  - {{id: g{g}, location: {{x: {g}.5, y: 0.25}}}}")
        lines.append("devices:")
        for d in range(n_dev):
            klass = rng.choice(["A", "C"])
            activation = rng.choice(["otaa", "abp"])
            lines.append(f"  - id: d{d}")
            lines.append(f"    location: {{x: 0.0, y: {10 + d}.0}}")
            lines.append(f"    class: {klass}")
            lines.append(f"    activation: {activation}")
            if rng.random() < 0.7:
                lines.append(
                    f"    traffic: {{period_s: {rng.randrange(10, 100)}.0, "
                    f"fport: {rng.randrange(1, 10)}, "
                    f"confirmed: {str(rng.random() < 0.3).lower()}}}")
        spec = parse_scenario("\n".join(lines))
        assert parse_scenario(render_scenario(spec)) == spec
