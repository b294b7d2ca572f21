import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcdetect.attribution import (
    AttributionResult,
    BaselineProfile,
    DeviceState,
    TelemetryIndex,
    TelemetrySample,
    Verdict,
    attribute,
    attribute_windows,
    build_baseline,
    deviation_scores,
    pattern_vector,
    read_telemetry,
    threshold_verdict,
    train_pattern_model,
    write_telemetry,
)
from rcdetect.errors import InsufficientBaselineError, MissingTelemetryError, ParameterError, SchemaError
from rcdetect.features import extract_features
from rcdetect.traffic import PacketRecord, Protocol, TimeWindow

NORMAL = DeviceState.NORMAL


def samples(energy, memory=None, device="d", state=NORMAL, start=0):
    memory = memory if memory is not None else [2048.0] * len(energy)
    return [TelemetrySample(start + i, device, float(e), float(m), state) for i, (e, m) in enumerate(zip(energy, memory))]


def profile(e_mean=100.0, e_std=10.0, m_mean=2048.0, m_std=40.0):
    return BaselineProfile("d", e_mean, e_std, m_mean, m_std, 30)


def test_constant_baseline_std_floor():
    p = build_baseline(samples([100] * 30), "d")
    assert p.energy_mean == 100 and p.energy_std == 1e-6 and p.count == 30


def test_two_value_baseline():
    p = build_baseline(samples([90, 110]), "d", min_count=2)
    assert p.energy_mean == 100 and p.energy_std == 10


def test_insufficient_baseline():
    with pytest.raises(InsufficientBaselineError, match="30"):
        build_baseline(samples([100] * 10), "d")


def test_abnormal_samples_excluded():
    pool = samples([100] * 40) + samples([900] * 40, state=DeviceState.ABNORMAL, start=100)
    assert build_baseline(pool, "d") == build_baseline(samples([100] * 40), "d")


@pytest.mark.parametrize("mean,z", [(100, 0.0), (130, 3.0), (80, -2.0)])
def test_energy_deviation(mean, z):
    w = TimeWindow("d", 0, 10)
    ez, mz = deviation_scores(profile(), w, samples([mean] * 5))
    assert ez == pytest.approx(z) and mz == 0.0


def test_deviation_uses_only_window_samples():
    w = TimeWindow("d", 5, 5)
    s = samples([0, 0, 0, 0, 0, 130, 130, 130, 130, 130, 0])
    assert deviation_scores(profile(), w, s)[0] == pytest.approx(3.0)
    assert deviation_scores(profile(), w, TelemetryIndex(s))[0] == pytest.approx(3.0)


def test_missing_telemetry():
    with pytest.raises(MissingTelemetryError):
        deviation_scores(profile(), TimeWindow("d", 100, 5), samples([100] * 3))
    with pytest.raises(MissingTelemetryError):
        deviation_scores(profile(), TimeWindow("other", 0, 5), samples([100] * 3))


@pytest.mark.parametrize("ez,mz,verdict", [
    (5, 0.1, Verdict.ENERGY_ATTACK), (4, 4, Verdict.BOTH), (1, 1, Verdict.OTHER),
    (0, 3.5, Verdict.MEMORY_ATTACK), (3.0, 3.0, Verdict.OTHER),
])
def test_threshold_rule(ez, mz, verdict):
    assert threshold_verdict(ez, mz, (3, 3)) is verdict


def test_rule_exhaustive_grid():
    grid = np.linspace(-2, 8, 41)
    for ez, mz, te, tm in itertools.product(grid, grid, (2.0, 3.0), (3.0, 4.5)):
        v = threshold_verdict(ez, mz, (te, tm))
        expected = {(True, True): Verdict.BOTH, (True, False): Verdict.ENERGY_ATTACK,
                    (False, True): Verdict.MEMORY_ATTACK, (False, False): Verdict.OTHER}[(ez > te, mz > tm)]
        assert v is expected


@given(st.floats(-10, 10), st.floats(0, 10), st.floats(-10, 10))
def test_energy_monotone(ez, bump, mz):
    before = threshold_verdict(ez, mz)
    after = threshold_verdict(ez + bump, mz)
    implicating = (Verdict.ENERGY_ATTACK, Verdict.BOTH)
    if before in implicating:
        assert after in implicating


def test_attribute_threshold_path():
    w = TimeWindow("d", 0, 10)
    r = attribute(w, profile(), samples([150] * 5))
    assert isinstance(r, AttributionResult)
    assert r.verdict is Verdict.ENERGY_ATTACK and r.pattern_label is None and not r.missing_telemetry


def _feat():
    return extract_features([PacketRecord(1, 1, 2, 3, 4, Protocol.UDP, 60, 0)])


class FixedModel:
    def __init__(self, proba):
        self.proba = np.asarray([proba])

    def predict_proba(self, X):
        return self.proba

    def predict(self, X):
        k = self.proba.shape[1]
        return np.array([k - 1 - int(np.argmax(self.proba[0][::-1]))])


def test_pattern_override_needs_confidence():
    w = TimeWindow("d", 0, 10)
    s = samples([150] * 5)
    strong = attribute(w, profile(), s, pattern_model=FixedModel([0.05, 0.9, 0.05, 0.0]), features=_feat())
    assert strong.verdict is Verdict.MEMORY_ATTACK and strong.pattern_score == pytest.approx(0.9)
    weak = attribute(w, profile(), s, pattern_model=FixedModel([0.3, 0.7, 0.0, 0.0]), features=_feat())
    assert weak.verdict is Verdict.ENERGY_ATTACK and weak.pattern_label is Verdict.MEMORY_ATTACK
    with pytest.raises(ParameterError):
        attribute(w, profile(), s, pattern_model=FixedModel([1, 0, 0, 0]))


def test_attribute_windows_flags_missing():
    s = samples([150] * 5)
    out = attribute_windows([TimeWindow("d", 0, 10), TimeWindow("d", 100, 10), TimeWindow("x", 0, 10)],
                            {"d": profile()}, s)
    assert [r.verdict for r in out] == [Verdict.ENERGY_ATTACK, Verdict.OTHER, Verdict.OTHER]
    assert [r.missing_telemetry for r in out] == [False, True, True]
    assert math.isnan(out[1].energy_z)


def test_pattern_model_training():
    rng = np.random.default_rng(0)
    feats = [_feat()] * 40
    z = [(float(e), float(m)) for e, m in rng.normal(0, 1, (40, 2))]
    z = [(e + 10 * (i % 2), m) for i, (e, m) in enumerate(z)]
    verdicts = [Verdict.ENERGY_ATTACK if i % 2 else Verdict.OTHER for i in range(40)]
    model = train_pattern_model(feats, z, verdicts, seed=1, n_trees=5)
    assert model.classes == ("OTHER", "MEMORY_ATTACK", "ENERGY_ATTACK", "BOTH")
    probe = pattern_vector(_feat(), 10.0, 0.0)[None, :]
    assert model.predict(probe)[0] == Verdict.ENERGY_ATTACK


def test_telemetry_csv_round_trip():
    s = samples([100.5, 101.25], [2048.0, 2050.5]) + samples([99.0], device="e", state=DeviceState.IDLE)
    buf = io.StringIO()
    write_telemetry(s, buf, comment="hdr")
    assert read_telemetry(io.StringIO(buf.getvalue())) == s


def test_telemetry_csv_errors():
    with pytest.raises(SchemaError):
        read_telemetry(io.StringIO("timestamp_us,device_id\n1,d\n"))
    with pytest.raises(SchemaError):
        read_telemetry(io.StringIO("timestamp_us,device_id,energy_mw,memory_kib,state\n1,d,-5,10,NORMAL\n"))
    with pytest.raises(SchemaError):
        read_telemetry(io.StringIO(""))
