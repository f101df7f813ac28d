import numpy as np
import pytest
from scipy import stats

from pdedag import dsl
from pdedag.config import SamplingConfig, SolverConfig
from pdedag.datagen import (CountTooLarge, PdeCoefficients, ast_from_coefficients,
                            augment_translate, draw_seed, generate_dataset,
                            generate_sample, sample_initial_condition, sample_pde,
                            sample_points)
from pdedag.dataio import read_dataset

SMALL_SOLVER = SolverConfig(n_x=64, n_t=11)


def test_sample_pde_deterministic():
    a = sample_pde(np.random.default_rng(123))
    b = sample_pde(np.random.default_rng(123))
    assert np.array_equal(a.c, b.c) and a.nu == b.nu


def test_coefficient_zero_fraction():
    rng = np.random.default_rng(7)
    draws = [sample_pde(rng) for _ in range(10_000)]
    zero_frac = np.mean([d.zero_mask for d in draws], axis=0)
    assert np.all(np.abs(zero_frac - 0.5) < 0.02)


def test_nonzero_coefficients_uniform_in_range():
    rng = np.random.default_rng(8)
    values = np.concatenate([sample_pde(rng).c.ravel() for _ in range(4000)])
    nonzero = values[values != 0.0]
    assert nonzero.min() >= -3.0 and nonzero.max() <= 3.0
    assert stats.kstest(nonzero, stats.uniform(loc=-3, scale=6).cdf).pvalue > 0.01


def test_log_viscosity_uniform():
    rng = np.random.default_rng(9)
    nus = [sample_pde(rng).nu for _ in range(8000)]
    positive = np.log([n for n in nus if n > 0])
    span = np.log(1.0) - np.log(1e-3)
    assert stats.kstest(positive, stats.uniform(loc=np.log(1e-3), scale=span).cdf).pvalue > 0.01


def test_linear_flux_gets_zero_viscosity_half_the_time():
    rng = np.random.default_rng(10)
    linear_nu = [d.nu for d in (sample_pde(rng) for _ in range(20_000))
                 if d.c[1, 2] == 0.0 and d.c[1, 3] == 0.0]
    frac = np.mean([nu == 0.0 for nu in linear_nu])
    assert abs(frac - 0.5) < 0.03


def test_ic_spectral_content_is_sparse():
    cfg = SamplingConfig(abs_prob=0.0, window_prob=0.0)
    rng = np.random.default_rng(11)
    for _ in range(10):
        g = sample_initial_condition(rng, 256, cfg)
        spectrum = np.abs(np.fft.rfft(g)) / 256
        hot = np.flatnonzero(spectrum > 1e-10)
        assert len(hot) <= cfg.ic_terms
        assert all(cfg.ic_n_lo <= b <= cfg.ic_n_hi for b in hot)


def test_ic_single_term_full_period():
    cfg = SamplingConfig(ic_terms=1, ic_n_lo=1, ic_n_hi=1, abs_prob=0.0, window_prob=0.0)
    g = sample_initial_condition(np.random.default_rng(12), 128, cfg)
    spectrum = np.abs(np.fft.rfft(g))
    assert np.argmax(spectrum) == 1  # exactly one full period over the domain
    assert spectrum[2:].max() < 1e-10


def test_ic_abs_transform():
    cfg = SamplingConfig(abs_prob=1.0, window_prob=0.0)
    rng = np.random.default_rng(13)
    for _ in range(5):
        g = sample_initial_condition(rng, 64, cfg)
        assert np.all(g >= 0.0) or np.all(g <= 0.0)


def test_ic_window_transform_damps_amplitude():
    cfg_plain = SamplingConfig(abs_prob=0.0, window_prob=0.0)
    cfg_window = SamplingConfig(abs_prob=0.0, window_prob=1.0)
    plain = sample_initial_condition(np.random.default_rng(14), 64, cfg_plain)
    windowed = sample_initial_condition(np.random.default_rng(14), 64, cfg_window)
    assert np.max(np.abs(windowed)) <= np.max(np.abs(plain)) + 1e-12
    assert not np.array_equal(plain, windowed)


def test_ast_from_coefficients_structure():
    coeffs = PdeCoefficients(c=np.array([[1.5, 0.0, 0.0, -2.0], [0.0, 0.7, 0.0, 0.0]]), nu=0.1)
    ast = ast_from_coefficients(coeffs)
    assert dsl.validate_ast(ast).ok
    text = dsl.print_pde(ast)
    assert "dt(u)" in text and "dx(" in text and "nu" in text
    # zero terms never appear
    assert "c01" not in text and "c12" not in text

    no_diff = ast_from_coefficients(PdeCoefficients(c=np.array([[0.0, 1.0, 0, 0], [0] * 4]), nu=0.0))
    assert "nu" not in dsl.print_pde(no_diff)


def test_ast_from_coefficients_unbound_slots():
    coeffs = PdeCoefficients(c=np.array([[0.0, 2.0, 0, 0], [0, 1.0, 0, 0]]), nu=0.0)
    ast = ast_from_coefficients(coeffs, unbound={"c01", "c11"})
    assert dsl.unbound_names(ast) == ["c01", "c11"]


def test_draw_seed_independent_per_index():
    seeds = {draw_seed(5, i) for i in range(100)}
    assert len(seeds) == 100
    assert draw_seed(5, 3) == draw_seed(5, 3)


def test_generate_sample_deterministic():
    a = generate_sample(5, 0, SamplingConfig(), SMALL_SOLVER)
    b = generate_sample(5, 0, SamplingConfig(), SMALL_SOLVER)
    assert type(a) is type(b)
    if not isinstance(a, tuple):
        assert np.array_equal(a.ic, b.ic) and np.array_equal(a.solution, b.solution)


def _dir_digest(path):
    import hashlib

    digest = hashlib.sha256()
    for p in sorted(path.iterdir()):
        digest.update(p.name.encode())
        digest.update(p.read_bytes())
    return digest.hexdigest()


def test_generate_dataset_reproducible_and_rejection_bookkeeping(tmp_path):
    out1 = generate_dataset(tmp_path / "a", count=3, base_seed=21, solver_cfg=SMALL_SOLVER)
    out2 = generate_dataset(tmp_path / "b", count=3, base_seed=21, solver_cfg=SMALL_SOLVER)
    assert _dir_digest(out1) == _dir_digest(out2)
    bundle = read_dataset(out1)
    man = bundle.manifest
    assert man["accepted"] + man["rejected"] == man["draws"]
    assert man["accepted"] == 3
    for sample in bundle.samples:
        assert np.max(np.abs(sample.solution)) <= 10.0
        assert np.array_equal(sample.solution[0], sample.ic)


def test_generate_dataset_worker_invariance(tmp_path):
    serial = generate_dataset(tmp_path / "s", count=2, base_seed=33, solver_cfg=SMALL_SOLVER)
    pooled = generate_dataset(tmp_path / "p", count=2, base_seed=33, solver_cfg=SMALL_SOLVER,
                              workers=2, chunk=3)
    assert _dir_digest(serial) == _dir_digest(pooled)


def test_augment_translate_identities():
    sample = generate_sample(5, 1, SamplingConfig(), SMALL_SOLVER)
    if isinstance(sample, tuple):
        pytest.skip("draw rejected; pick another seed")
    assert np.array_equal(augment_translate(sample, 0).solution, sample.solution)
    assert np.array_equal(augment_translate(sample, sample.n_x).solution, sample.solution)
    s = 17
    round_trip = augment_translate(augment_translate(sample, s), sample.n_x - s)
    assert np.array_equal(round_trip.solution, sample.solution)
    assert np.array_equal(round_trip.ic, sample.ic)

    shifted = augment_translate(sample, s)
    assert np.array_equal(shifted.solution[:, s:], sample.solution[:, : sample.n_x - s])


def test_sample_points_exhaustive_and_consistent():
    sample = generate_sample(5, 1, SamplingConfig(), SMALL_SOLVER)
    total = sample.n_t * sample.n_x
    t_idx, x_idx, values = sample_points(np.random.default_rng(0), sample, count=total)
    assert len(set(zip(t_idx.tolist(), x_idx.tolist()))) == total
    assert np.array_equal(values, sample.solution[t_idx, x_idx])
    with pytest.raises(CountTooLarge):
        sample_points(np.random.default_rng(0), sample, count=total + 1)


def test_sample_points_uniform_chi_square():
    sample = generate_sample(5, 1, SamplingConfig(), SMALL_SOLVER)
    total = sample.n_t * sample.n_x
    rng = np.random.default_rng(1)
    counts = np.zeros(total)
    for _ in range(400):
        t_idx, x_idx, _ = sample_points(rng, sample, count=64)
        counts[t_idx * sample.n_x + x_idx] += 1
    assert stats.chisquare(counts).pvalue > 0.01
