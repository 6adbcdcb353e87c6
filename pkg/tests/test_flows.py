import io
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idslab import attacks as at
from idslab import flows as fl
from idslab.errors import EmptyDatasetError, OrderingError, ParseError
from idslab.modbus import EndpointId, Role
from idslab.packets import AppTag, PacketRecord, TrafficKind
from oracles import reference_rows

HOSTS = [
    EndpointId("10.0.0.1", 502, Role.PLC),
    EndpointId("10.0.0.2", 50000, Role.HMI),
    EndpointId("10.0.0.2", 50001, Role.HMI),
    EndpointId("10.0.0.9", 4444, Role.ATTACKER),
]


def pkt(t, src, dst, size=60, label=0, lost=False):
    return PacketRecord(t, src, dst, size, AppTag.OTHER, label,
                        TrafficKind.BACKDOOR if label else TrafficKind.NORMAL,
                        dropped=lost)


def assert_matches_reference(packets, timeout):
    expected = reference_rows(packets, timeout)
    ds = fl.build_dataset(packets, idle_timeout=timeout)
    assert len(ds) == len(expected)
    for got, label, want in zip(ds.X.tolist(), ds.y.tolist(), expected):
        assert label == want["label"]
        for name, value in zip(fl.FEATURE_NAMES, got):
            if name in fl.INTEGER_FEATURES:
                assert value == want[name], name
            else:
                # exact up to the final floating rounding of each quantity
                assert value == pytest.approx(float(want[name]), rel=1e-12, abs=1e-12), name


packet_lists = st.lists(
    st.tuples(st.integers(0, 30_000), st.integers(0, 3), st.integers(0, 3),
              st.integers(40, 1500), st.booleans(), st.integers(0, 9)),
    min_size=1, max_size=200,
)


@settings(max_examples=300, deadline=None)
@given(packet_lists)
def test_features_match_reference_on_random_captures(raw):
    raw.sort(key=lambda r: r[0])
    packets = []
    for ms, a, b, size, label, loss in raw:
        if a == b:
            b = (a + 1) % 4
        packets.append(pkt(ms / 1000.0, HOSTS[a], HOSTS[b], size, int(label), loss == 0))
    assert_matches_reference(packets, timeout=5.0)


def test_features_match_reference_on_simulated_run():
    scenarios = [at.AttackScenario(TrafficKind.SQL_INJECTION, start=5.0, duration=4.0,
                                   query_rate=2.0),
                 at.AttackScenario(TrafficKind.COMMAND_INJECTION, start=12.0, duration=6.0,
                                   rewrite_rounds=2)]
    run = at.compose_run(20.0, scenarios, seed=5)
    assert 50 < len(run.packets) <= 200
    assert_matches_reference(list(run.packets), timeout=fl.DEFAULT_IDLE_TIMEOUT)


def test_aggregation_examples():
    a, b, c = HOSTS[0], HOSTS[1], HOSTS[3]
    same = [pkt(0.0, a, b), pkt(1.0, b, a), pkt(2.0, a, b)]
    assert [f.packet_count for f in fl.aggregate_flows(same, 60.0)] == [3]
    split = [pkt(0.0, a, b), pkt(120.0, a, b)]
    assert len(fl.aggregate_flows(split, 60.0)) == 2
    keys = [pkt(0.0, a, b), pkt(0.5, a, c)]
    assert len(fl.aggregate_flows(keys, 60.0)) == 2


def test_decreasing_timestamps_rejected():
    with pytest.raises(OrderingError):
        fl.aggregate_flows([pkt(1.0, HOSTS[0], HOSTS[1]), pkt(0.5, HOSTS[0], HOSTS[1])])


def _single_flow_features(times, size=60):
    packets = [pkt(t, HOSTS[1], HOSTS[0], size) for t in times]
    flow, = fl.aggregate_flows(packets)
    return fl.compute_features(flow)


def test_four_packets_over_one_second():
    v = _single_flow_features([0.0, 1 / 3, 2 / 3, 1.0])
    assert (v.Spkts, v.Sbytes, v.Dpkts) == (4, 240, 0)
    assert v.Srate == 4.0 and v.Sload == 1920.0 and v.Dload == 0.0 and v.Ploss == 0.0
    assert (v.Sport, v.Dport) == (50000, 502)


def test_constant_gaps_have_no_jitter():
    v = _single_flow_features([0.0, 0.01, 0.02, 0.03])
    assert v.SIntPkt == pytest.approx(10.0) and v.SrcJitter == pytest.approx(0.0, abs=1e-9)


def test_jitter_example():
    v = _single_flow_features([0.0, 0.01, 0.03, 0.06])
    assert v.SIntPkt == pytest.approx(20.0) and v.SrcJitter == pytest.approx(10.0)


def test_single_packet_flow_uses_duration_floor():
    v = _single_flow_features([5.0], size=100)
    assert v.Srate == pytest.approx(10.0) and v.Sload == pytest.approx(8000.0)
    assert v.SrcJitter == 0.0 and v.SIntPkt == 0.0


@pytest.fixture(scope="module")
def normal_run():
    return at.compose_run(600.0, seed=8)


@pytest.fixture(scope="module")
def attack_run():
    return at.compose_run(600.0, [at.AttackScenario(TrafficKind.BACKDOOR, 100.0, 30.0,
                                                    exfil_bytes=200_000)], seed=8)


def test_conservation_and_additivity(attack_run):
    ds = fl.build_dataset(attack_run)
    col = {name: ds.X[:, i] for i, name in enumerate(fl.FEATURE_NAMES)}
    assert col["Tpkts"].sum() == len(attack_run.packets)
    assert col["TBytes"].sum() == sum(p.size for p in attack_run.packets)
    assert np.array_equal(col["Tpkts"], col["Spkts"] + col["Dpkts"])
    assert np.array_equal(col["TBytes"], col["Sbytes"] + col["Dbytes"])
    assert np.array_equal(col["Tloss"], col["Sloss"] + col["Dloss"])
    assert np.allclose(col["Ploss"], 100 * col["Tloss"] / col["Tpkts"])
    assert np.isfinite(ds.X).all() and (ds.X >= 0).all()


def test_normal_only_run_is_all_zero_labels(normal_run):
    assert fl.build_dataset(normal_run).y.sum() == 0


def test_backdoor_window_yields_attack_rows(attack_run):
    assert fl.build_dataset(attack_run).y.sum() >= 1


def test_poll_rates_stable_and_attacks_stand_out(normal_run, attack_run):
    ds = fl.build_dataset(normal_run)
    polls = ds.X[ds.X[:, fl.FEATURE_NAMES.index("Dport")] == 502]
    srate = polls[:, fl.FEATURE_NAMES.index("Srate")]
    mean = srate.mean()
    assert len(srate) > 100 and srate.std() / mean < 0.1
    attacked = fl.build_dataset(attack_run)
    attack_srate = attacked.X[attacked.y == 1, fl.FEATURE_NAMES.index("Srate")]
    assert np.any(np.abs(attack_srate - mean) > 0.1 * mean)


def test_csv_is_deterministic_and_parses(attack_run):
    text = fl.build_dataset(attack_run).to_csv()
    assert text == fl.build_dataset(attack_run).to_csv()
    assert text.splitlines()[0].split(",") == list(fl.CSV_HEADER)
    assert len(fl.CSV_HEADER) == 24
    back = fl.Dataset.from_csv(io.StringIO(text))
    assert back.to_csv() == text


def test_csv_uses_six_significant_digits():
    ds = fl.Dataset(np.full((1, 23), 1.0 / 3.0), np.array([0]))
    row = ds.to_csv().splitlines()[1].split(",")
    assert row[0] == "0.333333" and row[1] == "0"


def test_csv_errors_report_line():
    text = fl.Dataset(np.ones((3, 23)), np.array([0, 1, 0])).to_csv()
    lines = text.splitlines()
    lines[2] = lines[2][:-1] + "7"
    with pytest.raises(ParseError) as err:
        fl.Dataset.from_csv(io.StringIO("\n".join(lines) + "\n"))
    assert err.value.line == 3


def test_empty_run_rejected():
    with pytest.raises(EmptyDatasetError):
        fl.build_dataset([])


def test_mean_is_average_over_overlapping_flows():
    a, b, c, d = HOSTS
    packets = [pkt(0.0, a, b), pkt(0.5, d, a), pkt(1.0, d, a), pkt(4.0, a, b), pkt(10.0, c, d)]
    ds = fl.build_dataset(packets)
    mean = ds.X[:, 0]
    assert mean[0] == pytest.approx(statistics.fmean([4.0, 0.5]))
    assert mean[1] == pytest.approx(statistics.fmean([4.0, 0.5]))
    assert mean[2] == 0.0
