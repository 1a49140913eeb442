import numpy as np
import pytest

from dynpact.geometry import ImageGrid, make_ring_array, samples_to_cover


def small_setup(n=24, sensors=16, span=0.016, radius=0.03, sample_rate=10e6,
                t_start=0.0, num_samples=None):
    """A compact grid/ring pair whose window covers every pixel."""
    grid = ImageGrid.centered(n, span)
    if num_samples is None:
        num_samples = samples_to_cover(grid, radius=radius, sample_rate=sample_rate,
                                       t_start=t_start)
    geom = make_ring_array(sensors, radius=radius, sample_rate=sample_rate,
                           num_samples=num_samples, t_start=t_start)
    return grid, geom


def profile_fwhm(profile: np.ndarray) -> float:
    """Full width at half maximum of a 1D profile, in samples, by linear
    interpolation of the half-max crossings around the peak."""
    peak = int(np.argmax(profile))
    half = profile[peak] / 2.0
    left = peak
    while left > 0 and profile[left] > half:
        left -= 1
    if profile[left] > half:
        x_left = float(left)
    else:
        frac = (half - profile[left]) / (profile[left + 1] - profile[left])
        x_left = left + frac
    right = peak
    n = profile.size
    while right < n - 1 and profile[right] > half:
        right += 1
    if profile[right] > half:
        x_right = float(right)
    else:
        frac = (half - profile[right]) / (profile[right - 1] - profile[right])
        x_right = right - frac
    return x_right - x_left


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
