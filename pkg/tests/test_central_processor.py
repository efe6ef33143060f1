import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pemo.central_processor import (
    NO_LAG,
    InternalNoise,
    LagSearch,
    TemplateCache,
    TemplatePair,
    ccv,
    cross_correlation,
    decide_3afc,
    decide_from_ccvs,
    derive_templates,
    difference_representation,
    interval_ccvs,
    normalize_energy,
    truncate_to_tobs,
)
from pemo.icra_noise import generate_icra_noise, paired_noise
from pemo.modulation_analysis import InternalRepresentation, build_representation
from pemo.stimuli import SYNTHETIC_PIANOS

FS = 1000.0


def rep(data, fs=FS):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    return InternalRepresentation(
        data=data, fs=fs, band_index=np.arange(n), mod_index=np.zeros(n, int),
        audio_fc=np.arange(1, n + 1) * 100.0, audio_erb=np.arange(n) + 3.0, mod_mfc=np.array([1.0]),
    )


def random_template(rng, n_ch=3, n=400):
    return normalize_energy(rep(rng.standard_normal((n_ch, n))))


def brute_xcorr(a, b, ls):
    out = []
    for l in ls:
        s = 0.0
        for n in range(a.shape[1]):
            if 0 <= n + l < b.shape[1]:
                s += np.dot(a[:, n], b[:, n + l])
        out.append(s)
    return np.array(out)


# ------------------------------------------------------------ templates

@pytest.fixture(scope="module")
def pianos():
    fs = 22050.0
    a = SYNTHETIC_PIANOS["S1"].render(fs=fs, dur=0.4)
    b = SYNTHETIC_PIANOS["S3"].render(fs=fs, dur=0.4)
    noises = [paired_noise(generate_icra_noise(a, "A", 2 * k), generate_icra_noise(b, "A", 2 * k + 1))
              for k in range(4)]
    return a, b, noises


def test_templates_unit_energy(pianos, model):
    a, b, noises = pianos
    tp = derive_templates(a, b, noises, model, t_obs=0.25)
    assert tp.T_pt.energy() == pytest.approx(1.0, abs=1e-6)
    assert tp.T_pr.energy() == pytest.approx(1.0, abs=1e-6)
    assert tp.T_pt.n_samples == round(0.25 * a.fs)
    assert (tp.snr_supra, tp.n_realizations) == (21.0, 4)


def test_self_templates_similar(pianos, model):
    a, _, noises = pianos
    other = [paired_noise(generate_icra_noise(a, "A", 50 + k), generate_icra_noise(a, "A", 60 + k)) for k in range(4)]
    t1 = derive_templates(a, a, noises, model, t_obs=0.25).T_pt
    t2 = derive_templates(a, a, other, model, t_obs=0.25).T_pt
    cos = np.vdot(t1.data, t2.data) / np.sqrt(np.vdot(t1.data, t1.data) * np.vdot(t2.data, t2.data))
    assert cos > 0.95


def test_noiseless_template_is_clean_representation(pianos, model):
    a, b, noises = pianos
    tp = derive_templates(a, b, noises[:1], model, t_obs=0.25, snr_supra=np.inf, n_realizations=1)
    R = build_representation(a, model, 0.25).data
    np.testing.assert_allclose(tp.T_pt.data, R / np.sqrt(np.sum(R * R) / a.fs), atol=1e-12)


def test_insufficient_realizations(pianos, model):
    a, b, noises = pianos
    with pytest.raises(ValueError):
        derive_templates(a, b, noises[:3], model)


def test_swapped(rng):
    tp = TemplatePair(random_template(rng), random_template(rng), None)
    s = tp.swapped()
    assert s.T_pt is tp.T_pr and s.T_pr is tp.T_pt


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 40), elements=st.floats(-1e3, 1e3)).filter(lambda a: np.sum(a * a) > 1e-6))
def test_normalize_energy_property(data):
    assert normalize_energy(rep(data)).energy() == pytest.approx(1.0, rel=1e-9)


def test_normalize_zero_energy():
    with pytest.raises(ValueError):
        normalize_energy(rep(np.zeros((2, 10))))


# ------------------------------------------------------------ difference

def test_difference_identity_and_linearity(rng):
    R, N = rep(rng.standard_normal((3, 50))), rep(rng.standard_normal((3, 50)))
    assert np.all(difference_representation(R, R).data == 0)
    d = difference_representation(R, N).data
    d3 = difference_representation(R.with_data(3 * R.data), N.with_data(3 * N.data)).data
    np.testing.assert_allclose(d3, 3 * d, atol=1e-12)


def test_difference_shape_mismatch(rng):
    with pytest.raises(ValueError):
        difference_representation(rep(np.ones((3, 50))), rep(np.ones((3, 40))))
    with pytest.raises(ValueError):
        difference_representation(rep(np.ones((3, 50))), rep(np.ones((2, 50))))


# ------------------------------------------------------------ CCV

def test_ccv_zero_input(rng):
    T = random_template(rng)
    assert ccv(T.with_data(np.zeros_like(T.data)), T) == 0.0


@pytest.mark.parametrize("c", [0.5, 2.0, 7.3])
def test_ccv_scaled_template(rng, c):
    T = random_template(rng)
    assert ccv(T.with_data(c * T.data), T, NO_LAG) == pytest.approx(c, rel=1e-9)
    assert ccv(T.with_data(c * T.data), T) == pytest.approx(c, rel=1e-9)


def test_ccv_delay_found(rng):
    T = random_template(rng, n=500)
    d = np.zeros_like(T.data)
    d[:, 23:] = T.data[:, :-23]
    lag, vals = cross_correlation(T.with_data(d), T)
    assert lag[np.argmax(vals)] == pytest.approx(-0.023)
    edge = np.sum(T.data[:, -23:] ** 2) / FS
    assert vals.max() == pytest.approx(1.0 - edge, rel=1e-9)


def test_cross_correlation_matches_brute_force(rng):
    a = rng.standard_normal((2, 120))
    b = rng.standard_normal((2, 100))
    lags = LagSearch(-0.02, 0.03, 0.001)
    ls, vals = cross_correlation(rep(a), rep(b), lags)
    np.testing.assert_allclose(vals, brute_xcorr(a, b, np.round(ls * FS).astype(int)) / FS, atol=1e-12)


def test_lag_grid():
    ls = LagSearch().lags_seconds()
    assert ls.size == 101 and ls[0] == pytest.approx(-0.05) and ls[-1] == pytest.approx(0.05)
    assert np.all(LagSearch().lags_samples(22050)[::50] == [-1102, 0, 1102])


def test_lag_search_validation():
    with pytest.raises(ValueError):
        LagSearch(0.01, 0.05, 0.001)
    with pytest.raises(ValueError):
        LagSearch(-0.05, 0.05, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lag_search_not_below_zero_lag(seed):
    rng = np.random.default_rng(seed)
    T = random_template(rng, n=200)
    dR = rep(rng.standard_normal((3, 200)))
    assert ccv(dR, T) >= ccv(dR, T, NO_LAG) - 1e-12


def test_layout_mismatch(rng):
    with pytest.raises(ValueError):
        ccv(rep(np.ones((3, 10))), rep(np.ones((2, 10))))


# ------------------------------------------------------------ decision

def test_decision_noiseless_disjoint_templates():
    # blocks 100 ms apart stay disjoint under the +/-50 ms lag search
    Tt = normalize_energy(rep(np.r_[np.ones(50), np.zeros(150)][None, :]))
    Tr = normalize_energy(rep(np.r_[np.zeros(150), np.ones(50)][None, :]))
    tp = TemplatePair(Tt, Tr, None)
    zero = Tt.with_data(np.zeros_like(Tt.data))
    for pos in range(3):
        intervals = [(Tr.with_data(2 * Tr.data), zero) for _ in range(3)]
        intervals[pos] = (Tt.with_data(2 * Tt.data), zero)
        ct, cr = interval_ccvs(intervals, tp, NO_LAG)
        assert ct[pos] == pytest.approx(2.0) and cr[pos] == pytest.approx(0.0)
        assert decide_3afc(intervals, tp, InternalNoise(0.0), NO_LAG) == pos
        assert decide_3afc(intervals, tp, InternalNoise(0.0)) == pos


def test_interval_ccvs_match_ccv(rng):
    tp = TemplatePair(random_template(rng), random_template(rng), None)
    intervals = [(rep(rng.standard_normal((3, 400))), rep(rng.standard_normal((3, 400)))) for _ in range(3)]
    ct, cr = interval_ccvs(intervals, tp)
    for i, (x, n) in enumerate(intervals):
        d = difference_representation(x, n)
        assert ct[i] == pytest.approx(ccv(d, tp.T_pt), abs=1e-12)
        assert cr[i] == pytest.approx(ccv(d, tp.T_pr), abs=1e-12)


def test_decide_needs_three_intervals(rng):
    tp = TemplatePair(random_template(rng), random_template(rng), None)
    with pytest.raises(ValueError):
        decide_3afc([(tp.T_pt, tp.T_pt)] * 2, tp, InternalNoise(0.0))


def test_huge_sigma_is_chance():
    noise = InternalNoise(1e6, np.random.default_rng(0))
    hits = sum(decide_from_ccvs([1.0, 0.0, 0.0], [0.0, 1.0, 1.0], noise) == 0 for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(1 / 3, abs=0.02)


def test_identical_intervals_chance():
    noise = InternalNoise(10.1, np.random.default_rng(1))
    hits = sum(decide_from_ccvs([5.0] * 3, [2.0] * 3, noise) == 1 for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(1 / 3, abs=0.02)


def test_delta_ccv_spread():
    rng = np.random.default_rng(2)
    d = InternalNoise(10.1, rng).draw(200_000) - InternalNoise(10.1, rng).draw(200_000)
    assert np.std(d) == pytest.approx(14.4, rel=0.02)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 3, elements=st.floats(-100, 100)), arrays(float, 3, elements=st.floats(-100, 100)),
       st.floats(-1e3, 1e3), st.integers(0, 2 ** 32 - 1))
def test_decision_invariant_to_common_offset(ct, cr, c, seed):
    a = decide_from_ccvs(ct, cr, InternalNoise(10.1, np.random.default_rng(seed)))
    b = decide_from_ccvs(ct + c, cr + c, InternalNoise(10.1, np.random.default_rng(seed)))
    assert a == b


def test_criteria_variants():
    noise = InternalNoise(0.0)
    assert decide_from_ccvs([1, 3, 2], [0, 0, 5], noise, "target") == 1
    assert decide_from_ccvs([1, 3, 2], [4, 5, 0], noise, "reference") == 2
    assert decide_from_ccvs([1, 3, 2], [4, 5, 0], noise, "difference") == 2
    with pytest.raises(ValueError):
        decide_from_ccvs([1, 2, 3], [1, 2, 3], noise, "bogus")


def test_internal_noise_validation():
    with pytest.raises(ValueError):
        InternalNoise(-1.0)
    assert np.all(InternalNoise(0.0).draw(4) == 0)


# ------------------------------------------------------------ truncation

def test_truncate(rng):
    R = rep(rng.standard_normal((2, 1300)))
    assert truncate_to_tobs(R, None) is R
    full = truncate_to_tobs(R, 1.3)
    np.testing.assert_array_equal(full.data, R.data)
    short = truncate_to_tobs(R, 0.25)
    assert short.n_samples == 250 and short.t_obs == 0.25
    assert short.energy() <= R.energy()
    with pytest.raises(ValueError):
        truncate_to_tobs(R, 1.5)


# ------------------------------------------------------------ cache

def test_template_cache_round_trip(tmp_path, rng):
    cache = TemplateCache(tmp_path)
    key = {"target": "a", "reference": "b", "t_obs": 0.25}
    assert cache.get(key) is None
    tp = TemplatePair(random_template(rng), random_template(rng), 0.25)
    cache.put(key, tp)
    back = cache.get(key)
    np.testing.assert_array_equal(back.T_pt.data, tp.T_pt.data)
    np.testing.assert_array_equal(back.T_pr.data, tp.T_pr.data)
    assert back.t_obs == 0.25
    assert cache.get({**key, "t_obs": 0.5}) is None
