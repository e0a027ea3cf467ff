import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biokey.errors import DegenerateCorrelation, NonPositiveDuration, NoPairs, ZeroProduct
from biokey.escrow import EscrowStore, deposit_key, expire_sweep
from biokey.glcm import (
    ACTIVE,
    EXPIRED,
    FeatureVector,
    GlcmFeatureExtractor,
    GlcmKeyGenerator,
    GlcmParams,
    GrayImage,
    attach_validity,
    binding_key,
    compute_glcm,
    derive_key,
    extract_features,
    generate_key,
    load_image,
    read_gray_file,
    write_gray_file,
)

CHECKER = np.array([[(r + c) % 2 for c in range(4)] for r in range(4)])


def glcm_oracle(pixels, levels, dr, dc):
    counts = np.zeros((levels, levels))
    h, w = pixels.shape
    for r in range(h):
        for c in range(w):
            r2, c2 = r + dr, c + dc
            if 0 <= r2 < h and 0 <= c2 < w:
                counts[pixels[r, c], pixels[r2, c2]] += 1
    return counts / counts.sum()


def features_oracle(M):
    L = M.shape[0]
    pairs = [(i, j, M[i, j]) for i in range(L) for j in range(L)]
    mu_i = sum(i * p for i, _, p in pairs)
    mu_j = sum(j * p for _, j, p in pairs)
    sd_i = math.sqrt(sum((i - mu_i) ** 2 * p for i, _, p in pairs))
    sd_j = math.sqrt(sum((j - mu_j) ** 2 * p for _, j, p in pairs))
    return {
        "trace": sum(p for i, j, p in pairs if i == j),
        "contrast": sum((i - j) ** 2 * p for i, j, p in pairs),
        "correlation": sum((i - mu_i) * (j - mu_j) * p for i, j, p in pairs) / (sd_i * sd_j),
        "energy": sum(p * p for _, _, p in pairs),
        "entropy": -sum(p * math.log2(p) for _, _, p in pairs if p > 0),
        "homogeneity": sum(p / (1 + abs(i - j)) for i, j, p in pairs),
    }


def test_two_by_two_horizontal():
    g = compute_glcm(GrayImage(np.array([[0, 1], [0, 1]]), 2), GlcmParams(1, 0, 2))
    expected = np.zeros((2, 2))
    expected[0, 1] = 1.0
    assert np.array_equal(g.matrix, expected)
    assert g.pair_count == 2


@pytest.mark.parametrize("angle", [0, 45, 90, 135])
def test_constant_image_single_mass(angle):
    g = compute_glcm(GrayImage(np.full((5, 5), 7), 8), GlcmParams(2, angle, 8))
    assert g.matrix[7, 7] == 1.0
    assert g.matrix.sum() == 1.0
    f = extract_features(g, allow_degenerate=True)
    assert (f.trace, f.contrast, f.energy, f.entropy, f.homogeneity) == (1, 0, 1, 0, 1)
    assert math.isnan(f.correlation)
    with pytest.raises(DegenerateCorrelation):
        extract_features(g)


def test_checkerboard():
    g = compute_glcm(GrayImage(CHECKER, 2), GlcmParams(1, 0, 2))
    assert g.pair_count == 12
    assert g.matrix[0, 1] == 0.5 and g.matrix[1, 0] == 0.5
    f = extract_features(g)
    assert f.contrast == 1 and f.trace == 0 and f.energy == 0.5 and f.homogeneity == 0.5
    assert f.correlation == pytest.approx(-1)


def test_single_off_diagonal_mass():
    g = compute_glcm(GrayImage(np.array([[0, 1], [0, 1]]), 2), GlcmParams(1, 0, 2))
    f = extract_features(g, allow_degenerate=True)
    assert f.entropy == 0 and f.energy == 1 and f.contrast == 1


@pytest.mark.parametrize("angle,offset", [(0, (0, 3)), (45, (-3, 3)), (90, (-3, 0)), (135, (-3, -3))])
def test_offsets(angle, offset):
    assert GlcmParams(3, angle).offset == offset


def test_no_pairs():
    with pytest.raises(NoPairs):
        compute_glcm(GrayImage(np.zeros((2, 2), int), 2), GlcmParams(2, 0, 2))


def test_bad_params():
    with pytest.raises(ValueError):
        GlcmParams(0, 0)
    with pytest.raises(ValueError):
        GlcmParams(1, 30)
    with pytest.raises(ValueError):
        GrayImage(np.array([[0, 2], [1, 1]]), 2)
    with pytest.raises(ValueError):
        GrayImage(np.array([0, 1]), 2)


@settings(max_examples=200, deadline=None)
@given(arrays(np.int64, (4, 4), elements=st.integers(0, 3)), st.sampled_from([0, 45, 90, 135]), st.integers(1, 3))
def test_features_match_pair_enumeration(pixels, angle, distance):
    params = GlcmParams(distance, angle, 4)
    g = compute_glcm(GrayImage(pixels, 4), params)
    M = glcm_oracle(pixels, 4, *params.offset)
    assert np.allclose(g.matrix, M, atol=1e-12)
    assert abs(g.matrix.sum() - 1) < 1e-9
    if M.sum(axis=1).max() == 1 or M.sum(axis=0).max() == 1:
        return  # constant marginal, correlation undefined
    f = extract_features(g)
    for name, value in features_oracle(M).items():
        assert getattr(f, name) == pytest.approx(value, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(arrays(np.int64, (8, 8), elements=st.integers(0, 7)), st.sampled_from([0, 45, 90, 135]))
def test_feature_bounds(pixels, angle):
    f = extract_features(compute_glcm(GrayImage(pixels, 8), GlcmParams(1, angle, 8)), allow_degenerate=True)
    assert 0 < f.energy <= 1 + 1e-12
    assert 0 <= f.entropy <= 2 * math.log2(8) + 1e-12
    assert 0 < f.homogeneity <= 1 + 1e-12
    assert 0 <= f.trace <= 1 + 1e-12


def test_derive_key_shifts_decimal_point():
    f = FeatureVector(1.2345, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert derive_key(f, 5) == "12345"
    assert derive_key(FeatureVector(0.5, 0.25, -1.0, 1.0, 1.0, 1.0), 3) == "125"


def test_derive_key_zero_or_nan():
    with pytest.raises(ZeroProduct):
        derive_key(FeatureVector(1.0, 0.0, 1.0, 1.0, 1.0, 1.0))
    with pytest.raises(ZeroProduct):
        derive_key(FeatureVector(1.0, 1.0, math.nan, 1.0, 1.0, 1.0))


def test_key_is_deterministic():
    rng = np.random.default_rng(0)
    image = GrayImage(rng.integers(0, 32, (32, 32)), 32)
    keys = {generate_key(image, GlcmParams(1, 45)) for _ in range(100)}
    assert len(keys) == 1
    (key,) = keys
    assert len(key) == 15 and key[0] != "0"


def test_keys_are_sensitive_to_image_and_angle():
    rng = np.random.default_rng(1)
    images = [GrayImage(rng.integers(0, 32, (16, 16)), 32) for _ in range(100)]
    keys = {generate_key(im, GlcmParams()) for im in images}
    assert len(keys) >= 99
    differ = 0
    for im in images:
        a = extract_features(compute_glcm(im, GlcmParams(1, 0))).as_array()
        b = extract_features(compute_glcm(im, GlcmParams(1, 90))).as_array()
        differ += not np.array_equal(a, b)
    assert differ >= 90


def test_binding_key_is_120_bits():
    k = binding_key("123456789012345")
    assert len(k) == 15
    assert binding_key("123456789012345") == k != binding_key("123456789012346")


def test_attach_validity_and_expiry():
    t0 = 1_000_000.0
    key = attach_validity("12345", t0, 3600)
    assert key.expires_at == t0 + 3600 and key.status == ACTIVE
    assert key.refreshed(t0 + 3600).status == ACTIVE
    assert key.refreshed(t0 + 3601).status == EXPIRED
    with pytest.raises(NonPositiveDuration):
        attach_validity("12345", t0, 0)

    store = EscrowStore()
    rec = deposit_key(store, "P1", key, "lic", "H1", t0)
    assert expire_sweep(store, t0 + 3601) == 1
    assert store.get(rec.escrow_id).key_status == EXPIRED


def test_gray_file_round_trip(tmp_path):
    image = GrayImage(np.arange(12).reshape(3, 4) % 5, 5)
    write_gray_file(tmp_path / "x.pgray", image)
    back = read_gray_file(tmp_path / "x.pgray")
    assert np.array_equal(back.pixels, image.pixels) and back.levels == 5
    assert np.array_equal(load_image(tmp_path / "x.pgray").pixels, image.pixels)


def test_png_adapter(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    data = np.array([[0, 8, 255], [128, 7, 16]], dtype=np.uint8)
    Image.fromarray(data).save(tmp_path / "x.png")
    image = load_image(tmp_path / "x.png", 32)
    assert np.array_equal(image.pixels, data.astype(int) * 32 // 256)


def test_from_intensities_binning():
    image = GrayImage.from_intensities([[0, 7, 8, 255], [16, 24, 247, 248]], 32)
    assert image.pixels.tolist() == [[0, 0, 1, 31], [2, 3, 30, 31]]


def test_estimators():
    rng = np.random.default_rng(2)
    X = [rng.integers(0, 32, (20, 20)) for _ in range(3)]
    feats = GlcmFeatureExtractor(angle=45).fit(X).transform(X)
    assert feats.shape == (3, 6)
    assert list(GlcmFeatureExtractor().get_feature_names_out())[0] == "trace"
    keys = GlcmKeyGenerator(angle=45, key_len=12).fit_transform(X)
    assert [generate_key(GrayImage(x), GlcmParams(1, 45), 12) for x in X] == list(keys)
    assert GlcmKeyGenerator(key_len=9).get_params()["key_len"] == 9
