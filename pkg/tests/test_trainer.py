import numpy as np
import pytest

from conftest import small_setup
from dynpact.errors import ConfigError, DivergenceError
from dynpact.forward import apply_forward, build_forward_operator
from dynpact.geometry import ImageSequence
from dynpact.inr import (
    CoordinateBatch,
    init_model,
    normalized_frame_times,
    render,
)
from dynpact.phantom import Disc, LinearPath, PhantomSpec, render_phantom
from dynpact.trainer import (
    AdamState,
    TrainConfig,
    adam_step,
    fit,
    lr_at,
    temporal_superresolve,
)


def _tiny_problem(n=12, sensors=12, t_count=3, **cfg_kwargs):
    grid, geom = small_setup(n=n, sensors=sensors, span=0.01, sample_rate=20e6)
    spec = PhantomSpec(
        shapes=(Disc(0.9, (-1.5e-3, -1e-3), 1.6e-3, LinearPath((4e-3, 3e-3))),),
        num_frames=t_count, frame_interval=0.1,
    )
    truth = render_phantom(spec, grid)
    op = build_forward_operator(grid, geom)
    sino = apply_forward(op, truth)
    cfg = TrainConfig(**{"iterations": 60, "seed": 5, "length": 24, "sigma": 8.0,
                         "log_every": 0, **cfg_kwargs})
    return grid, op, sino, cfg


# --- learning-rate schedule -----------------------------------------------

def test_lr_endpoints():
    cfg = TrainConfig(iterations=2000)
    assert lr_at(cfg, 0) == 1e-3
    assert lr_at(cfg, 1999) == pytest.approx(1e-6, rel=1e-12)


def test_lr_geometric_midpoint():
    cfg = TrainConfig(iterations=2001)
    assert lr_at(cfg, 1000) == pytest.approx(np.sqrt(1e-3 * 1e-6), rel=1e-12)
    cfg2k = TrainConfig(iterations=2000)
    assert lr_at(cfg2k, 1000) == pytest.approx(3.162e-5, rel=1e-2)


def test_lr_monotone_decreasing():
    cfg = TrainConfig(iterations=50)
    rates = [lr_at(cfg, i) for i in range(50)]
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_lr_out_of_range():
    cfg = TrainConfig(iterations=10)
    with pytest.raises(ValueError):
        lr_at(cfg, 10)
    with pytest.raises(ValueError):
        lr_at(cfg, -1)


def test_single_iteration_schedule():
    assert lr_at(TrainConfig(iterations=1), 0) == 1e-3


# --- config ----------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(iterations=0)
    with pytest.raises(ConfigError):
        TrainConfig(lr_start=1e-6, lr_end=1e-3)
    with pytest.raises(ConfigError):
        TrainConfig(adam_beta1=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(lambda_d=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(dtype="float16")
    with pytest.raises(ConfigError):
        TrainConfig(lr_schedule="cosine")


def test_config_round_trip():
    cfg = TrainConfig(iterations=123, lambda_d=0.5, dtype="float64")
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"no_such_field": 1})


# --- Adam -------------------------------------------------------------------

def test_adam_zero_gradient_keeps_weights():
    model = init_model(seed=0, L=8, sigma=2.0)
    state = AdamState.for_model(model)
    before = [w.copy() for w in model.weights]
    zero_grads = [(np.zeros_like(w), np.zeros_like(b))
                  for w, b in zip(model.weights, model.biases)]
    adam_step(model, state, zero_grads, lr=1e-3)
    for w, w0 in zip(model.weights, before):
        assert np.array_equal(w, w0)


def test_adam_moves_against_gradient():
    model = init_model(seed=0, L=8, sigma=2.0)
    state = AdamState.for_model(model)
    grads = [(np.ones_like(w), np.ones_like(b))
             for w, b in zip(model.weights, model.biases)]
    before = model.weights[0].copy()
    adam_step(model, state, grads, lr=1e-2)
    assert np.all(model.weights[0] < before)


# --- fit ---------------------------------------------------------------------

def test_fit_deterministic():
    _grid, op, sino, cfg = _tiny_problem(iterations=25)
    m1, h1 = fit(sino, op, cfg)
    m2, h2 = fit(sino, op, cfg)
    for a, b in zip(m1.weights, m2.weights):
        assert np.array_equal(a, b)
    assert h1.rows == h2.rows


def test_fit_reduces_dc():
    _grid, op, sino, cfg = _tiny_problem(iterations=150)
    _, hist = fit(sino, op, cfg)
    assert hist.rows[-1][1] < 0.5 * hist.rows[0][1]


def test_self_consistent_start_has_zero_dc():
    grid, op, sino, cfg = _tiny_problem()
    cfg = TrainConfig(**{**cfg.to_dict(), "iterations": 3,
                         "lambda_d": 1e-4, "lambda_l": 1e-4})
    # build a target that the freshly initialized model reproduces exactly
    model0 = init_model(cfg.seed, cfg.length, cfg.sigma)
    model0.compute_dtype = np.dtype(cfg.dtype)
    times = normalized_frame_times(sino.num_frames)
    batch = CoordinateBatch.casorati(grid.n, times)
    start = render(model0, batch, grid.n, sino.num_frames,
                   grid=grid, frame_times=sino.frame_times)
    y0 = apply_forward(op, start)
    trained, hist = fit(y0, op, cfg)
    assert hist.rows[0][1] == 0.0  # DC loss at iteration 0 is exactly zero
    # weights still move, through the regularizer gradients alone
    moved = any(not np.array_equal(a, b)
                for a, b in zip(trained.weights, model0.weights))
    assert moved


def test_fit_rejects_mismatched_geometry():
    _grid, op, sino, cfg = _tiny_problem()
    from dynpact.forward import Sinogram
    from dynpact.geometry import make_ring_array
    other = make_ring_array(6, radius=0.03, sample_rate=20e6,
                            num_samples=sino.geometry.num_samples)
    bad = Sinogram(np.zeros((6, sino.geometry.num_samples, 2)), other, np.arange(2.0))
    with pytest.raises(ValueError):
        fit(bad, op, cfg)


def test_runaway_loss_raises():
    # self-consistent start makes the initial total tiny; a huge step then
    # drives the loss far above 10x its starting value for many iterations
    grid, op, sino, cfg = _tiny_problem()
    wild = TrainConfig(**{**cfg.to_dict(), "iterations": 100,
                          "lr_start": 1.0, "lr_end": 0.9,
                          "lambda_d": 1e-12, "lambda_l": 1e-12,
                          "divergence_patience": 10})
    model0 = init_model(wild.seed, wild.length, wild.sigma)
    model0.compute_dtype = np.dtype(wild.dtype)
    batch = CoordinateBatch.casorati(grid.n, normalized_frame_times(sino.num_frames))
    start = render(model0, batch, grid.n, sino.num_frames,
                   grid=grid, frame_times=sino.frame_times)
    y0 = apply_forward(op, start)
    with pytest.raises(DivergenceError) as err:
        fit(y0, op, wild)
    assert err.value.iteration >= 10


def test_moving_average_trend_on_successful_run():
    _grid, op, sino, cfg = _tiny_problem(iterations=220)
    _, hist = fit(sino, op, cfg)
    ma = hist.moving_average(window=100)
    assert np.all(np.diff(ma) <= 1e-9 * ma[0])


def test_training_log_csv(tmp_path):
    _grid, op, sino, cfg = _tiny_problem(iterations=5)
    _, hist = fit(sino, op, cfg)
    path = tmp_path / "log.csv"
    hist.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,dc,tv,lr,total,learning_rate"
    assert len(lines) == 6


def test_lambda_auto_scales_initial_fractions():
    _grid, op, sino, cfg = _tiny_problem(iterations=2)
    _, hist = fit(sino, op, cfg)
    it0 = hist.rows[0]
    dc0, tv0, lr0 = it0[1], it0[2], it0[3]
    assert hist.resolved_lambda_d * tv0 == pytest.approx(1e-3 * dc0, rel=1e-9)
    assert hist.resolved_lambda_l * lr0 == pytest.approx(1e-4 * dc0, rel=1e-9)


# --- pure least-squares convergence ------------------------------------------

@pytest.mark.slow
def test_pure_least_squares_convergence():
    # lambda = 0 and a noiseless self-consistent target: DC collapses by 1e6
    grid, op, sino, _ = _tiny_problem(n=12, sensors=12, t_count=2)
    target_model = init_model(seed=77, L=24, sigma=8.0)
    target_model.compute_dtype = np.dtype("float64")
    times = normalized_frame_times(2)
    batch = CoordinateBatch.casorati(grid.n, times)
    target = render(target_model, batch, grid.n, 2, grid=grid,
                    frame_times=np.arange(2.0))
    y = apply_forward(op, target)
    cfg = TrainConfig(iterations=4000, seed=5, length=24, sigma=8.0,
                      lambda_d=0.0, lambda_l=0.0, dtype="float64", log_every=0)
    _, hist = fit(y, op, cfg)
    totals = hist.totals()
    assert totals.min() < 1e-6 * totals[0]


# --- temporal super-resolution ------------------------------------------------

def test_superresolve_factor_one_matches_render():
    grid, op, sino, cfg = _tiny_problem(iterations=10)
    model, _ = fit(sino, op, cfg)
    direct = render(
        model,
        CoordinateBatch.casorati(grid.n, normalized_frame_times(sino.num_frames)),
        grid.n, sino.num_frames, grid=grid, frame_times=sino.frame_times,
    )
    sr = temporal_superresolve(model, 1, grid, sino.frame_times)
    assert np.array_equal(sr.data, direct.data)
    assert np.array_equal(sr.frame_times, sino.frame_times)


def test_superresolve_factor_four_contains_trained_frames():
    grid, op, sino, cfg = _tiny_problem(t_count=5, iterations=10)
    model, _ = fit(sino, op, cfg)
    base = temporal_superresolve(model, 1, grid, sino.frame_times)
    dense = temporal_superresolve(model, 4, grid, sino.frame_times)
    assert dense.num_frames == 4 * (5 - 1) + 1
    for k in range(5):
        assert np.array_equal(dense.data[:, :, 4 * k], base.data[:, :, k])


def test_superresolve_single_frame_and_bad_factor():
    grid, op, sino, cfg = _tiny_problem(t_count=1, iterations=5)
    model, _ = fit(sino, op, cfg)
    sr = temporal_superresolve(model, 4, grid, sino.frame_times)
    assert sr.num_frames == 1
    with pytest.raises(ValueError):
        temporal_superresolve(model, 0, grid, sino.frame_times)
