import math

import numpy as np
import pytest
from scipy import integrate

from alloylab.disorder import (
    CouplingConfiguration,
    PiecewisePolynomialDensity,
    PiecewiseProfile,
    RaisedCosineDensity,
    SingleSitePotential,
    TensorProductFunction,
    bump_density,
    bump_profile,
    check_assumption,
    density_preset,
    hat_profile,
    polyline_profile,
    raised_cosine_density,
    sample_couplings,
    sobolev_ratio,
)
from alloylab.lattice import box


def quad_abs(f, a, b, points):
    val, _ = integrate.quad(lambda t: abs(f(t)), a, b, points=points, limit=200)
    return val


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def test_bump_norms_exact():
    rho = bump_density()
    assert rho.support == (0.0, 1.0)
    assert rho.sup_norm == pytest.approx(30.0 / 16.0, abs=1e-14)
    assert rho.d1_norm == pytest.approx(3.75, abs=1e-13)
    # total variation of rho' with sign changes at 1/2 +- sqrt(3)/6
    assert rho.d2_norm == pytest.approx(40.0 * math.sqrt(3.0) / 3.0, abs=1e-12)


def test_bump_norms_against_quadrature():
    rho = bump_density()

    def d1(t):
        return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)

    def d2(t):
        return 60.0 * (1.0 - 6.0 * t + 6.0 * t * t)

    r = math.sqrt(3.0) / 6.0
    assert rho.d1_norm == pytest.approx(quad_abs(d1, 0, 1, [0.5]), abs=1e-10)
    assert rho.d2_norm == pytest.approx(quad_abs(d2, 0, 1, [0.5 - r, 0.5 + r]), abs=1e-10)
    mass, _ = integrate.quad(rho.pdf, 0, 1)
    assert mass == pytest.approx(1.0, abs=1e-12)


def test_unimodal_variation_is_twice_the_peak():
    rho = bump_density()
    assert rho.d1_norm == pytest.approx(2.0 * rho.sup_norm, abs=1e-13)
    cos = raised_cosine_density()
    assert cos.d1_norm == pytest.approx(2.0 * cos.sup_norm, abs=1e-13)


def test_raised_cosine_closed_form():
    rho = raised_cosine_density()
    assert rho.sup_norm == 2.0
    assert rho.d1_norm == 4.0
    assert rho.d2_norm == pytest.approx(8.0 * math.pi, abs=1e-13)
    mass, _ = integrate.quad(rho.pdf, 0, 1)
    assert mass == pytest.approx(1.0, abs=1e-12)

    def d2(t):
        return 4.0 * math.pi**2 * math.cos(2.0 * math.pi * t)

    assert rho.d2_norm == pytest.approx(quad_abs(d2, 0, 1, [0.25, 0.75]), abs=1e-9)


def test_density_presets():
    assert isinstance(density_preset("bump"), PiecewisePolynomialDensity)
    assert isinstance(density_preset("raised_cosine"), RaisedCosineDensity)
    with pytest.raises(ValueError):
        density_preset("nope")


def test_zero_length_support_rejected():
    with pytest.raises(ValueError):
        PiecewiseProfile((0.5, 0.5), ((1.0,),))


def test_unnormalized_density_rejected():
    half = PiecewiseProfile((0.0, 1.0), ((0.0, 0.0, 15.0, -30.0, 15.0),))
    with pytest.raises(ValueError):
        PiecewisePolynomialDensity(half)


def test_uniform_density_not_in_sobolev_class():
    # discontinuous at the edges: rejected at construction
    flat = PiecewiseProfile((0.0, 1.0), ((1.0,),))
    with pytest.raises(ValueError):
        PiecewisePolynomialDensity(flat)


def test_kinked_density_rejected():
    # triangle density: continuous but derivative jumps, so no integrable
    # second derivative
    tent = polyline_profile([0.0, 0.5, 1.0], [0.0, 2.0, 0.0])
    with pytest.raises(ValueError):
        PiecewisePolynomialDensity(tent)


def test_cdf_quantile_roundtrip():
    for rho in (bump_density(), raised_cosine_density()):
        q = np.linspace(1e-6, 1.0 - 1e-6, 101)
        t = rho.quantile(q)
        assert np.all(np.diff(t) > 0)
        assert np.max(np.abs(rho.cdf(t) - q)) < 1e-10


def test_two_piece_spline_density():
    # C^1 cubic pair glued at 1/2: 24t^2 - 32t^3 mirrored; peak 2, flat
    # derivative at 0, 1/2, 1
    profile = PiecewiseProfile(
        (0.0, 0.5, 1.0),
        ((0.0, 0.0, 24.0, -32.0), (-8.0, 48.0, -72.0, 32.0)),
    )
    rho = PiecewisePolynomialDensity(profile)
    assert rho.sup_norm == pytest.approx(2.0, abs=1e-13)
    assert rho.d1_norm == pytest.approx(4.0, abs=1e-13)
    # rho'' changes sign at 1/4 and 3/4; rho' peaks at +-6
    assert rho.d2_norm == pytest.approx(24.0, abs=1e-12)
    assert rho.cdf(0.5) == pytest.approx(0.5, abs=1e-14)
    q = np.linspace(0.01, 0.99, 51)
    assert np.max(np.abs(rho.cdf(rho.quantile(q)) - q)) < 1e-10


def test_discontinuous_pieces_rejected():
    # p1(1/2) = 1.5 but p2(1/2) = 2.5: value jump at the knot
    profile = PiecewiseProfile(
        (0.0, 0.5, 1.0),
        ((0.0, 0.0, 6.0), (-2.0, 12.0, -6.0)),
    )
    with pytest.raises(ValueError):
        PiecewisePolynomialDensity(profile)


# ---------------------------------------------------------------------------
# potentials and the assumption certificate
# ---------------------------------------------------------------------------

def test_delta_fourier_is_one():
    u = SingleSitePotential.delta(2)
    for theta in ([0.0, 0.0], [1.0, 2.0], [3.14, 0.5]):
        assert u.fourier(theta) == pytest.approx(1.0 + 0.0j)


def test_fourier_symmetric_neighbors():
    u = SingleSitePotential({(0,): 1.0, (1,): 0.25, (-1,): 0.25})
    grid = np.linspace(0.0, 2.0 * np.pi, 701, endpoint=False)
    values = u.fourier(grid[:, None])
    expected = 1.0 + 0.5 * np.cos(grid)
    assert np.max(np.abs(values - expected)) < 1e-12
    assert np.min(np.abs(values)) == pytest.approx(0.5, abs=1e-4)


def test_fourier_mean_value_identity():
    rng = np.random.default_rng(5)
    for _ in range(10):
        sites = [(int(a), int(b)) for a, b in rng.integers(-2, 3, size=(4, 2))]
        vals = rng.normal(size=4)
        u = SingleSitePotential(dict(zip(sites, 1.0 + np.abs(vals))))
        assert u.fourier([0.0, 0.0]) == pytest.approx(u.mean_value(), abs=1e-12)


def test_zero_mean_potential_fourier_vanishes_at_zero():
    u = SingleSitePotential({(0,): 1.0, (1,): -1.0})
    assert abs(u.fourier(0.0)) == pytest.approx(0.0, abs=1e-15)


def test_check_assumption_delta():
    report = check_assumption(SingleSitePotential.delta(1), bump_density(), 8)
    assert report.fourier_min_modulus == pytest.approx(1.0)
    assert report.dominance_holds
    assert report.density_in_w21
    assert report.satisfied


def test_check_assumption_symmetric_neighbors():
    u = SingleSitePotential({(0,): 1.0, (1,): 0.25, (-1,): 0.25})
    report = check_assumption(u, bump_density(), 64)
    assert report.fourier_min_modulus == pytest.approx(0.5, abs=1e-12)
    assert report.dominance_holds
    assert report.satisfied


def test_check_assumption_zero_mean_fails():
    u = SingleSitePotential({(0,): 1.0, (1,): -1.0})
    report = check_assumption(u, bump_density(), 64)
    assert report.fourier_min_modulus == pytest.approx(0.0, abs=1e-12)
    assert not report.dominance_holds
    assert not report.satisfied


def test_check_assumption_nyquist_floor():
    u = SingleSitePotential({(0,): 1.0, (1,): 0.25, (-1,): 0.25})
    with pytest.raises(ValueError):
        check_assumption(u, bump_density(), 5)


def test_dominance_implies_positive_fourier_minimum():
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = int(rng.integers(1, 3))
        n_extra = int(rng.integers(1, 5))
        extras = {}
        while len(extras) < n_extra:
            site = tuple(int(c) for c in rng.integers(-2, 3, size=d))
            if site != (0,) * d:
                extras[site] = float(rng.normal())
        total = sum(abs(v) for v in extras.values())
        values = {(0,) * d: total + float(rng.uniform(0.1, 1.0))}
        values.update(extras)
        u = SingleSitePotential(values)
        margin = abs(u.value((0,) * d)) - (u.l1_norm - abs(u.value((0,) * d)))
        assert margin > 0
        report = check_assumption(u, bump_density(), 64)
        assert report.fourier_min_modulus >= margin - 1e-12
        assert report.satisfied


def test_potential_rejects_empty_and_mixed_dimension():
    with pytest.raises(ValueError):
        SingleSitePotential({})
    with pytest.raises(ValueError):
        SingleSitePotential({(0,): 0.0})
    with pytest.raises(ValueError):
        SingleSitePotential({(0,): 1.0, (0, 0): 1.0})


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_sample_couplings_deterministic():
    rho = bump_density()
    b = box(2, 1)
    a = sample_couplings(rho, b, np.random.default_rng(42))
    c = sample_couplings(rho, b, np.random.default_rng(42))
    assert np.array_equal(a.values, c.values)
    assert a.value_at((-2,)) == a.values[0]


def test_sample_couplings_bump_mean():
    rho = bump_density()
    b = box(0, 1)
    rng = np.random.default_rng(7)
    draws = rho.quantile(rng.random(10**6))
    stderr = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - 0.5) < 3.0 * stderr
    assert np.all((draws > 0.0) & (draws < 1.0))


def test_coupling_configuration_shape_check():
    with pytest.raises(ValueError):
        CouplingConfiguration(box(1, 1), np.zeros(2))


# ---------------------------------------------------------------------------
# explicit Sobolev check
# ---------------------------------------------------------------------------

def test_hat_times_hat_attains_one_quarter():
    f = TensorProductFunction(hat_profile(), hat_profile())
    report = sobolev_ratio(f)
    assert report.sup_norm == 1.0
    assert report.mixed_norm == 4.0
    assert report.ratio == 0.25


def test_bump_times_bump_attains_one_quarter():
    # any unimodal factor vanishing at its edges has variation = 2 * peak,
    # so unimodal tensor products all sit exactly at the 1/4 bound
    f = TensorProductFunction(bump_profile(), bump_profile())
    report = sobolev_ratio(f)
    assert report.sup_norm == pytest.approx((30.0 / 16.0) ** 2, abs=1e-12)
    assert report.mixed_norm == pytest.approx(3.75**2, abs=1e-12)
    assert report.ratio == pytest.approx(0.25, abs=1e-15)


def test_multimodal_profile_falls_below_quarter():
    wiggly = polyline_profile([0.0, 0.25, 0.5, 0.75, 1.0], [0.0, 1.0, -0.5, 1.0, 0.0])
    report = sobolev_ratio(TensorProductFunction(wiggly, hat_profile()))
    assert report.ratio < 0.25 - 1e-6


def test_scaling_leaves_ratio_unchanged():
    base = sobolev_ratio(TensorProductFunction(hat_profile(), bump_profile()))
    scaled = sobolev_ratio(TensorProductFunction(hat_profile(), bump_profile(), scale=17.5))
    assert scaled.ratio == pytest.approx(base.ratio, rel=1e-15)
    assert scaled.sup_norm == pytest.approx(17.5 * base.sup_norm, rel=1e-15)


def test_non_tensor_descriptor_rejected():
    with pytest.raises(TypeError):
        sobolev_ratio(lambda x, y: x * y)
    with pytest.raises(ValueError):
        TensorProductFunction(
            polyline_profile([0.0, 1.0], [1.0, 0.0]),  # jumps at the left edge
            hat_profile(),
        )


def random_polyline(rng):
    n = int(rng.integers(2, 7))
    nodes = np.sort(rng.uniform(0.0, 1.0, size=n + 1))
    while np.min(np.diff(nodes)) < 1e-3:
        nodes = np.sort(rng.uniform(0.0, 1.0, size=n + 1))
    values = np.concatenate([[0.0], rng.normal(size=n - 1), [0.0]])
    return polyline_profile(nodes, values)


def test_randomized_tensor_family_respects_quarter_bound():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        f = TensorProductFunction(random_polyline(rng), random_polyline(rng))
        assert sobolev_ratio(f).ratio <= 0.25 + 1e-12
