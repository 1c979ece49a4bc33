#!/usr/bin/env python3
"""
Tests for the projective backbone and the feature CSV path
"""

import numpy as np
import pytest

from backbone import (
    ArchitectureSpec,
    ConvBlockSpec,
    FeatureVec,
    ImageSample,
    backbone_forward,
    build_backbone,
    export_features,
    extract_features,
    forward_batch,
    ingest_features,
    parameter_count,
)
from errors import ConfigError, ContractError, DatasetError, DimensionError, ParseError
from gradient_check import check_gradients, probe_loss
from tensor_core import Tensor, float64_shadow


def small_spec(**overrides):
    settings = dict(input_side=8, in_channels=3, conv_blocks=[ConvBlockSpec(4)], fc_widths=[16])
    settings.update(overrides)
    return ArchitectureSpec(**settings)


def test_default_architecture_geometry():
    spec = ArchitectureSpec()
    assert spec.feature_width == 256
    assert spec.flattened_width == 16 * 8 * 8
    params = build_backbone(spec, 0)
    assert params.count() == parameter_count(spec)
    assert params.feature_width == 256


def test_parameter_count_includes_batch_norm():
    spec = small_spec(batch_norm=True)
    expected = (3 * 4 * 9 + 4) + 2 * 4 + (4 * 4 * 4 * 16 + 16)
    assert parameter_count(spec) == expected
    assert build_backbone(spec, 1).count() == expected


def test_invalid_architectures_raise_config_error():
    with pytest.raises(ConfigError):
        ConvBlockSpec(8, kernel=2)
    with pytest.raises(ConfigError):
        small_spec(fc_widths=[])
    with pytest.raises(ConfigError):
        ArchitectureSpec(input_side=1, conv_blocks=[ConvBlockSpec(4)])


def test_forward_is_non_negative_and_deterministic():
    spec = small_spec()
    params = build_backbone(spec, 3)
    images = Tensor(np.random.default_rng(0).uniform(0, 1, (5, 3, 8, 8)))
    first = forward_batch(images, params)
    second = forward_batch(images, build_backbone(spec, 3))
    assert first.shape == (5, 16)
    assert np.all(first.data >= 0)
    np.testing.assert_array_equal(first.data, second.data)


def test_single_image_projection_keeps_label():
    params = build_backbone(small_spec(), 0)
    image = ImageSample(np.full((3, 8, 8), 0.5), label=2)
    feature = backbone_forward(image, params)
    assert feature.width == 16
    assert feature.label == 2


def test_wrong_image_shape_raises_dimension_error():
    params = build_backbone(small_spec(), 0)
    with pytest.raises(DimensionError):
        forward_batch(Tensor(np.zeros((1, 3, 16, 16))), params)
    with pytest.raises(ContractError):
        forward_batch(Tensor(np.zeros((1, 3, 8, 8))), params, mode='infer')


def test_batch_norm_backbone_runs_in_both_modes():
    params = build_backbone(small_spec(batch_norm=True), 0)
    images = Tensor(np.random.default_rng(1).uniform(0, 1, (4, 3, 8, 8)))
    train_out = forward_batch(images, params, 'train')
    assert not np.allclose(params['block0.bn0.running_mean'].data, 0.0)
    eval_out = forward_batch(images, params, 'eval')
    assert train_out.shape == eval_out.shape == (4, 16)


def test_backbone_gradients_match_finite_differences():
    with float64_shadow():
        params = build_backbone(small_spec(fc_widths=[6]), 5)
        params['fc0.bias'].data += 0.5
        images = Tensor(np.random.default_rng(2).uniform(0, 1, (2, 3, 8, 8)))

        def fn():
            return probe_loss(forward_batch(images, params, 'train'), 11)

        errors = check_gradients(fn, {'conv': params['block0.conv0.weight'], 'fc': params['fc0.weight']})
    assert max(errors.values()) < 1e-4


def test_extract_features_passes_feature_rows_through():
    rows = [FeatureVec(np.ones(4), label=0), FeatureVec(np.zeros(4), label=1)]
    assert all(a is b for a, b in zip(extract_features(rows, None), rows))
    images = [ImageSample(np.zeros((3, 8, 8)), 0)]
    with pytest.raises(ContractError):
        extract_features(images, None)
    features = extract_features(images * 3, build_backbone(small_spec(), 0), batch_size=2)
    assert len(features) == 3 and all(f.label == 0 for f in features)


def test_feature_vectors_must_be_non_negative():
    with pytest.raises(ContractError):
        FeatureVec(np.array([0.5, -0.1]))


@pytest.mark.parametrize('value', [-0.01, 1.01, np.nan])
def test_image_values_must_lie_in_unit_range(value):
    pixels = np.full((3, 4, 4), 0.5)
    pixels[1, 2, 3] = value
    with pytest.raises(DatasetError):
        ImageSample(pixels, 0)
    assert ImageSample(np.clip(np.nan_to_num(pixels), 0.0, 1.0), 0).pixels.max() <= 1.0


def test_feature_csv_round_trip(tmp_path):
    features = [FeatureVec(np.array([0.25, 1.5, 0.0]), label=k % 2) for k in range(4)]
    path = export_features(tmp_path / 'features.csv', features)
    lines = path.read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'label,f0,f1,f2'
    rows = ingest_features(path)
    assert [label for _, label in rows] == [0, 1, 0, 1]
    np.testing.assert_array_equal(rows[0][0].values, features[0].values)


def test_ingest_skips_comments_and_blank_lines(tmp_path):
    path = tmp_path / 'features.csv'
    path.write_text("# exported features\nlabel,f0,f1\n\n0,0.1,0.2\n# note\n1,0.3,0.4\n", encoding='utf-8')
    rows = ingest_features(path)
    assert len(rows) == 2
    assert rows[1][0].width == 2


@pytest.mark.parametrize('body, bad_row', [
    ("label,f0,f1\n0,0.1\n", 2),
    ("label,f0,f1\n0,0.1,-0.2\n", 2),
    ("label,f0,f1\n0,0.1,0.2\n1,abc,0.2\n", 3),
    ("label,f0,f1\n0,0.1,nan\n", 2),
    ("label,x0,x1\n0,0.1,0.2\n", 1),
])
def test_ingest_reports_offending_row(tmp_path, body, bad_row):
    path = tmp_path / 'features.csv'
    path.write_text(body, encoding='utf-8')
    with pytest.raises(ParseError) as exc_info:
        ingest_features(path)
    assert exc_info.value.row == bad_row


def test_ingest_rejects_empty_file(tmp_path):
    path = tmp_path / 'features.csv'
    path.write_text("label,f0\n", encoding='utf-8')
    with pytest.raises(ParseError):
        ingest_features(path)
