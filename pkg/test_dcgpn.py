#!/usr/bin/env python3
"""
Tests for the generative prior network that produces the discriminant matrix
"""

import numpy as np
import pytest

from dcgpn import (
    LATENT_DIM,
    GeneratorSpec,
    LatentSeed,
    build_generator,
    generator_forward,
    sample_latent,
    validate_shape_contract,
)
from errors import ConfigError, ContractError, DimensionError
from gradient_check import check_gradients, probe_loss
from tensor_core import float64_shadow


def test_latent_seed_is_uniform_and_reproducible():
    z = sample_latent(4)
    assert z.values.shape == (LATENT_DIM,)
    assert np.all(z.values >= -1.0) and np.all(z.values <= 1.0)
    np.testing.assert_array_equal(z.values, sample_latent(4).values)
    assert not np.array_equal(z.values, sample_latent(5).values)
    with pytest.raises(DimensionError):
        LatentSeed(np.zeros(10))


def test_latent_first_coordinate_is_centred_across_seeds():
    first = np.array([sample_latent(seed).values[0] for seed in range(10000)], dtype=np.float64)
    assert abs(first.mean()) <= 0.03
    assert first.var() == pytest.approx(1 / 3, abs=0.02)


def test_discriminant_matrix_shape_and_range():
    params = build_generator(3, 256, 32, rng_seed=0)
    s = generator_forward(sample_latent(0), params)
    assert s.values.shape == (256, 3)
    assert s.feature_width == 256 and s.classes == 3
    assert np.all(np.abs(s.values.data) < 1.0)


def test_small_output_side():
    params = build_generator(2, 64, 4, rng_seed=1)
    assert params.spec.stages == 1
    s = generator_forward(sample_latent(1), params, mode='eval')
    assert s.values.shape == (64, 2)


@pytest.mark.parametrize('width', [100, 250, 16, 144])
def test_unsupported_feature_widths_raise_config_error(width):
    with pytest.raises(ConfigError):
        GeneratorSpec(classes=3, feature_width=width)


def test_generator_needs_two_classes_and_enough_channels():
    with pytest.raises(ConfigError):
        GeneratorSpec(classes=1, feature_width=256)
    with pytest.raises(ConfigError):
        GeneratorSpec(classes=3, feature_width=1024, base_channels=2)


def test_build_is_deterministic():
    first = build_generator(3, 256, 16, rng_seed=9)
    second = build_generator(3, 256, 16, rng_seed=9)
    assert first.bit_equal(second)
    assert not first.bit_equal(build_generator(3, 256, 16, rng_seed=10))


def test_forward_calls_are_counted():
    params = build_generator(2, 64, 4, rng_seed=0)
    z = sample_latent(0)
    assert params.forward_calls == 0
    generator_forward(z, params)
    generator_forward(z, params, mode='eval')
    assert params.forward_calls == 2
    with pytest.raises(ContractError):
        generator_forward(z, params, mode='sample')


def test_shape_contract_against_backbone_and_dataset():
    params = build_generator(3, 256, 8, rng_seed=0)
    validate_shape_contract(256, 3, params)
    with pytest.raises(ConfigError):
        validate_shape_contract(64, 3, params)
    with pytest.raises(ConfigError):
        validate_shape_contract(256, 4, params)


def test_generator_gradients_match_finite_differences():
    with float64_shadow():
        params = build_generator(2, 64, 4, rng_seed=3)
        z = sample_latent(3)

        def fn():
            return probe_loss(generator_forward(z, params).values, 21)

        errors = check_gradients(fn, {
            'project': params['project.weight'],
            'gamma': params['project.bn.gamma'],
            'output': params['output.weight'],
        })
    assert max(errors.values()) < 1e-4


def test_upsampling_stage_gradients_match_finite_differences():
    with float64_shadow():
        params = build_generator(2, 256, 4, rng_seed=4)
        z = sample_latent(4)

        def fn():
            return probe_loss(generator_forward(z, params).values, 22)

        errors = check_gradients(fn, {'stage': params['stage0.weight']})
    assert errors['stage'] < 1e-4
