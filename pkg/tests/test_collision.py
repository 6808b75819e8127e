import random

from lorawansim.phy import CollisionParams, Outcome, RxPacketView, resolve_collision

from oracles import capture_outcomes

PARAMS = CollisionParams()  # 6 dB threshold, final 5 preamble symbols critical
SYM = 1024  # ticks per symbol (sf7 at 125 kHz with 1 us ticks)
FREQ = 868_100_000


def view(start, rssi, *, payload_symbols=43, preamble_symbols=12.25, sf=7,
         freq=FREQ, sym=SYM):
    preamble_end = start + round(preamble_symbols * sym)
    rx_end = preamble_end + round(payload_symbols * sym)
    return RxPacketView(start, preamble_end, rx_end, rssi, freq, sf, sym)


def test_full_overlap_strong_candidate_captures():
    cand = view(0, -80.0)
    weak = view(0, -90.0)
    assert resolve_collision(cand, [weak], PARAMS) is Outcome.RECEIVED
    assert resolve_collision(weak, [cand], PARAMS) is Outcome.LOST_PREAMBLE


def test_equal_power_full_overlap_loses_both():
    a = view(0, -85.0)
    b = view(0, -85.0)
    assert resolve_collision(a, [b], PARAMS) is Outcome.LOST_PREAMBLE
    assert resolve_collision(b, [a], PARAMS) is Outcome.LOST_PREAMBLE


def test_interferer_ending_before_critical_section_is_harmless():
    cand = view(20_000, -85.0)
    crit_start = cand.preamble_end - 5 * SYM
    # Equal-power interferer whose last sample lands exactly at the start
    # of the candidate's critical preamble section.
    early = view(crit_start - 45_000, -85.0, payload_symbols=(45_000 / SYM) - 12.25)
    assert early.rx_end == crit_start
    assert resolve_collision(cand, [early], PARAMS) is Outcome.RECEIVED
    # One tick later and the lock is broken.
    late = view(early.tx_start + 1, -85.0, payload_symbols=(45_000 / SYM) - 12.25)
    assert resolve_collision(cand, [late], PARAMS) is Outcome.LOST_PREAMBLE


def test_payload_only_overlap_is_lost_payload():
    cand = view(0, -85.0)
    # Interferer starting right after the candidate's preamble completes.
    tail = view(cand.preamble_end, -82.0)
    assert resolve_collision(cand, [tail], PARAMS) is Outcome.LOST_PAYLOAD


def test_different_sf_is_orthogonal():
    cand = view(0, -85.0)
    other = view(0, -40.0, sf=9)
    assert resolve_collision(cand, [other], PARAMS) is Outcome.RECEIVED


def test_different_frequency_ignored():
    cand = view(0, -85.0)
    other = view(0, -40.0, freq=FREQ + 200_000)
    assert resolve_collision(cand, [other], PARAMS) is Outcome.RECEIVED


def test_capture_threshold_boundary():
    cand = view(0, -80.0)
    exactly = view(0, -86.0)   # delta == 6 dB: candidate survives
    almost = view(0, -85.9)    # delta 5.9 dB: both lose
    assert resolve_collision(cand, [exactly], PARAMS) is Outcome.RECEIVED
    assert resolve_collision(cand, [almost], PARAMS) is Outcome.LOST_PREAMBLE


def _touches_protected_window(packet, other):
    crit = packet.preamble_end - PARAMS.critical_preamble_symbols * packet.symbol_ticks
    lo = max(other.tx_start, crit)
    hi = min(other.rx_end, packet.rx_end)
    return lo < hi


def test_pairwise_antisymmetry_randomized():
    rng = random.Random(1)
    for _ in range(500):
        a = view(rng.randrange(0, 30_000), rng.uniform(-120, -60))
        b = view(rng.randrange(0, 30_000), rng.uniform(-120, -60))
        if not (_touches_protected_window(a, b) and _touches_protected_window(b, a)):
            continue
        ra = resolve_collision(a, [b], PARAMS)
        rb = resolve_collision(b, [a], PARAMS)
        received = [r for r in (ra, rb) if r is Outcome.RECEIVED]
        # Mutual overlap inside both protected windows: never both received,
        # and a small power gap loses both packets.
        assert len(received) <= 1
        if abs(a.rssi_dbm - b.rssi_dbm) < PARAMS.capture_threshold_db:
            assert len(received) == 0


def random_scenario(rng, max_packets=5):
    packets = []
    for _ in range(rng.randrange(2, max_packets + 1)):
        sym = SYM
        start = rng.randrange(0, 60_000)
        preamble_symbols = 12.25
        payload_symbols = rng.randrange(13, 80)
        packets.append({
            "start": start,
            "preamble_end": start + round(preamble_symbols * sym),
            "end": start + round(preamble_symbols * sym) + payload_symbols * sym,
            "rssi": rng.uniform(-120.0, -60.0),
            "freq": FREQ,
            "sf": 7,
            "symbol_ticks": sym,
        })
    return packets


def test_randomized_scenarios_match_bruteforce_oracle():
    rng = random.Random(2024)
    for _ in range(300):
        packets = random_scenario(rng)
        expected = capture_outcomes(packets, PARAMS.capture_threshold_db,
                                    PARAMS.critical_preamble_symbols)
        for i, pkt in enumerate(packets):
            cand = RxPacketView(pkt["start"], pkt["preamble_end"], pkt["end"],
                                pkt["rssi"], pkt["freq"], pkt["sf"],
                                pkt["symbol_ticks"])
            others = [RxPacketView(p["start"], p["preamble_end"], p["end"],
                                   p["rssi"], p["freq"], p["sf"],
                                   p["symbol_ticks"])
                      for j, p in enumerate(packets) if j != i]
            got = resolve_collision(cand, others, PARAMS)
            assert got.value == expected[i], (packets, i)
