import io
import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcdetect.errors import EmptyWindowError, ParameterError, ShapeError
from rcdetect.features import (
    FEATURE_NAMES,
    LabeledDataset,
    StandardizationParams,
    extract_features,
    feature_matrix,
    featurize,
    shannon_entropy,
    standardize,
    write_features_csv,
)
from rcdetect.traffic import Label, PacketRecord, Protocol, TimeWindow


def tcp(seq, length=60, ip_id=1, port=80, dst=2, ts=1):
    return PacketRecord(ts, 1, dst, 4000, port, Protocol.TCP, length, ip_id, seq)


def udp(port, length=60, ip_id=1, dst=2, ts=1):
    return PacketRecord(ts, 1, dst, 4000, port, Protocol.UDP, length, ip_id)


def test_constant_sequence_steps():
    f = extract_features([tcp(s) for s in (100, 200, 300, 400)])
    assert f.seq_irregularity == 0.0


def test_single_udp_port():
    f = extract_features([udp(53)] * 4)
    assert f.dst_port_entropy == 0.0 and f.dominant_port_fraction == 1.0
    assert f.seq_irregularity == 0.0


def test_uniform_udp_ports():
    f = extract_features([udp(p) for p in (1000, 2000, 3000, 4000)])
    assert f.dst_port_entropy == 2.0 and f.dominant_port_fraction == 0.25


def test_length_moments_and_constant_ip_id():
    lengths = [60, 60, 60, 1500, 60]
    f = extract_features([tcp(i, length=n, ip_id=7) for i, n in enumerate(lengths)])
    assert f.mean_len == 348.0 == statistics.fmean(lengths)
    assert f.len_stddev == pytest.approx(statistics.pstdev(lengths), rel=1e-12)
    assert f.len_stddev == 576.0
    assert f.iden_entropy == 0.0


def test_single_packet_window_is_all_zero_spread():
    f = extract_features([tcp(5)])
    assert (f.len_stddev, f.iden_entropy, f.seq_irregularity, f.dst_port_entropy) == (0, 0, 0, 0)
    assert f.num_packet == 1 and f.dominant_port_fraction == 1.0


def test_address_counts():
    f = extract_features([udp(53, dst=d) for d in (2, 3, 3, 4)])
    assert f.dst_ip_count == 3 and f.src_ip_count == 1


def test_empty_window_and_mixed_protocols():
    with pytest.raises(EmptyWindowError):
        extract_features([])
    with pytest.raises(EmptyWindowError):
        extract_features([udp(1)], Protocol.TCP)
    with pytest.raises(ParameterError):
        extract_features([udp(1), tcp(1)])


def test_mixed_window_yields_one_vector_per_protocol():
    pkts = [tcp(1, dst=9), udp(53, dst=9), tcp(2, dst=9)]
    feats = featurize(pkts, {9: "dev"}, 2_000_000)
    assert [(f.protocol, f.num_packet) for f in feats] == [(Protocol.TCP, 2), (Protocol.UDP, 1)]


def test_entropy_against_hand_formula():
    values = [1, 1, 2, 3]
    expected = -(0.5 * math.log2(0.5) + 2 * 0.25 * math.log2(0.25))
    assert shannon_entropy(values) == pytest.approx(expected) == 1.5


packet_lists = st.lists(
    st.builds(lambda seq, ln, ipid, port, dst: tcp(seq, ln, ipid, port, dst),
              st.integers(0, 2**32 - 1), st.integers(40, 1500), st.integers(0, 20),
              st.integers(1, 30), st.integers(1, 5)),
    min_size=1, max_size=40,
)


@settings(max_examples=200)
@given(packet_lists, st.randoms(use_true_random=False))
def test_only_sequence_feature_depends_on_order(pkts, rnd):
    shuffled = list(pkts)
    rnd.shuffle(shuffled)
    a, b = extract_features(pkts), extract_features(shuffled)
    for name in FEATURE_NAMES:
        if name != "seq_irregularity":
            assert getattr(a, name) == getattr(b, name), name


@settings(max_examples=200)
@given(packet_lists)
def test_entropy_bounds(pkts):
    f = extract_features(pkts)
    top = math.log2(f.num_packet) + 1e-12
    assert 0 <= f.dst_port_entropy <= top and 0 <= f.iden_entropy <= top
    assert 0 < f.dominant_port_fraction <= 1
    assert all(math.isfinite(v) for v in f.vector())


@settings(max_examples=100)
@given(packet_lists)
def test_collapsing_ports_zeroes_port_entropy(pkts):
    collapsed = [tcp(p.tcp_seq, p.length, p.ip_id, 80, p.dst_ip) for p in pkts]
    assert extract_features(collapsed).dst_port_entropy == 0.0


def test_random_ip_ids_approach_log_distinct():
    rng = np.random.default_rng(0)
    ids = rng.integers(0, 16, size=4000)
    f = extract_features([tcp(i, ip_id=int(v)) for i, v in enumerate(ids)])
    assert f.iden_entropy == pytest.approx(4.0, abs=0.01)


# -- standardization -----------------------------------------------------------

def test_two_point_standardization():
    Z, params = standardize(np.array([[2.0], [4.0]]))
    assert Z.ravel().tolist() == [-1.0, 1.0]


def test_constant_feature_flagged():
    Z, params = standardize(np.array([[5.0], [5.0], [5.0]]))
    assert Z.ravel().tolist() == [0.0, 0.0, 0.0]
    assert params.constant == (True,) and params.std == (1.0,)


def test_apply_known_params():
    p = StandardizationParams((10.0,), (2.0,), (False,))
    assert p.apply(np.array([[14.0]]))[0, 0] == 2.0
    with pytest.raises(ShapeError):
        p.apply(np.zeros((1, 2)))


def test_learn_needs_two_samples():
    with pytest.raises(ParameterError):
        standardize(np.zeros((1, 3)))


@settings(max_examples=100)
@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=2, max_size=50))
def test_standardized_training_moments(rows):
    X = np.array(rows)
    Z, params = standardize(X)
    for j in range(X.shape[1]):
        if params.constant[j]:
            assert np.allclose(Z[:, j], 0.0)
        elif X[:, j].std() > 1e-3 * max(1.0, np.abs(X[:, j]).max()):
            assert abs(Z[:, j].mean()) <= 1e-9
            assert abs(Z[:, j].std() - 1.0) <= 1e-9


def test_params_dict_round_trip():
    _, p = standardize(np.array([[1.0, 2.0], [3.0, 2.0]]))
    assert StandardizationParams.from_dict(p.to_dict()) == p


def test_one_hot_matrix_and_dataset(corpus):
    feats = corpus.features[:10]
    X = feature_matrix(feats, one_hot=True)
    assert X.shape == (10, len(FEATURE_NAMES) + 2)
    assert np.all(X[:, -2:].sum(axis=1) == 1)
    with pytest.raises(ShapeError):
        LabeledDataset(tuple(feats), (Label.NORMAL,))


def test_features_csv_column_order():
    f = extract_features([udp(53)], window=TimeWindow("d", 0, 10))
    buf = io.StringIO()
    write_features_csv([f], buf, [Label.NORMAL])
    header = buf.getvalue().splitlines()[0].split(",")
    assert header[4:13] == list(FEATURE_NAMES) == [
        "num_packet", "mean_len", "len_stddev", "iden_entropy", "seq_irregularity",
        "dst_port_entropy", "dominant_port_fraction", "dst_ip_count", "src_ip_count"]
