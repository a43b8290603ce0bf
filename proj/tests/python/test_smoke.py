"""End-to-end smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import diodeq


@pytest.fixture(scope="module")
def corpus():
    p = diodeq.SyntheticDiodeParams()
    p.ideality = 3.0
    p.saturation_current = 1e-9
    p.series_resistance = 3000.0
    p.photo_coeff = 1e-6
    volts = list(np.linspace(-3.5, 3.4, 40))
    return diodeq.synthesize_diode(p, volts, [0.0, 40.0, 80.0])


def test_dataset_and_stats(corpus):
    assert len(corpus) == 120
    st = diodeq.summary_stats(corpus)
    assert st["voltage"]["min"] == pytest.approx(-3.5)
    assert st["intensity"]["max"] == pytest.approx(80.0)


def test_scaler_round_trip(corpus):
    X = corpus.features()
    sc = diodeq.fit_scaler(X, diodeq.ScalerKind.IQR_ROBUST)
    back = diodeq.invert_scaler(sc, diodeq.apply_scaler(sc, X))
    assert np.allclose(back, X, rtol=1e-12)


def test_knn_memorizes(corpus):
    X = corpus.features()
    y = corpus.targets()
    sc = diodeq.fit_scaler(X, diodeq.ScalerKind.IQR_ROBUST)
    Xs = diodeq.apply_scaler(sc, X)
    knn = diodeq.KnnRegressor(k=4, p=4.0)
    knn.fit(Xs, y)
    assert diodeq.mse(y, knn.predict(Xs)) == 0.0


def test_mlp_fits_a_line():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(64, 2))
    y = 3.0 * X[:, 0] - 2.0 * X[:, 1]
    mlp = diodeq.MlpRegressor(layer_sizes=[2, 8, 1], learning_rate=3e-3, epochs=800, seed=5)
    train_hist, _ = mlp.train(X, y)
    assert train_hist[-1] < 1e-4


def test_gbt_monotone_training():
    rng = np.random.default_rng(2)
    X = rng.uniform(-2, 2, size=(50, 2))
    y = np.sin(X[:, 0]) + 0.2 * X[:, 1]
    gbt = diodeq.GbtRegressor(rounds=25)
    gbt.fit(X, y)
    hist = gbt.train_history()
    assert all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))


def test_fock_coherent_expectation():
    state = diodeq.apply_displacement(diodeq.vacuum_state(18), 0.5 + 0.3j)
    assert diodeq.expectation(state, diodeq.Observable.X) == pytest.approx(1.0, abs=1e-8)
    assert diodeq.expectation(state, diodeq.Observable.P) == pytest.approx(0.6, abs=1e-8)


def test_wigner_vacuum_normalized():
    grid = list(np.arange(-6.0, 6.0 + 1e-9, 0.2))
    W = diodeq.wigner(diodeq.vacuum_state(18), grid, grid)
    assert W.sum() * 0.04 == pytest.approx(1.0, abs=1e-3)


def test_overlap_matches_coherent_kernel():
    o = diodeq.overlap_analytic(0.3 + 0.1j, 0j, -0.2 + 0.4j, 0j)
    expected = math.exp(-abs((0.3 + 0.1j) - (-0.2 + 0.4j)) ** 2)
    assert abs(o) ** 2 == pytest.approx(expected, rel=1e-10)


def test_beta_constants():
    assert diodeq.beta_theory(2.89, 1.0) == pytest.approx(4.46e-5, rel=0.01)
    assert diodeq.beta_theory(2.89, 4.0) == pytest.approx(2.23e-5, rel=0.01)


def test_ideality_round_trip(corpus):
    dark = [(s.voltage, s.current) for s in corpus.samples if s.intensity == 0.0]
    V = [v for v, _ in dark]
    I = [i for _, i in dark]
    fit = diodeq.ideality_factor(V, I, 0.05, 0.65, 300.0)
    assert fit["n"] == pytest.approx(3.0, rel=0.05)


def test_qnn_forward_identity(corpus):
    model = diodeq.make_qnn_model(corpus, n_layers=8, cutoff=18, init_std=1e-3, seed=7)
    model.set_flat_params(np.zeros(40))
    enc = diodeq.qnn_encode(model, diodeq.IVSample(-0.05, 0.0, 0.0))
    pred, trace, _state = diodeq.qnn_forward(model, enc)
    assert pred == pytest.approx(2.0 * enc.alpha_in, abs=1e-6)
    assert trace == pytest.approx(1.0, abs=1e-9)


def test_qnn_short_training(corpus):
    model = diodeq.make_qnn_model(corpus, seed=3)
    out = diodeq.qnn_train(model, corpus, epochs=5, learning_rate=0.01, seed=3)
    assert len(out["train_loss"]) == 5
    assert out["train_loss"][-1] < out["train_loss"][0] * 2  # moving, not diverging
    assert min(out["min_trace"]) > 0.9
