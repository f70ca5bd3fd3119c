import numpy as np
import pytest
import scipy.sparse as sp

from attrinfer.errors import DimensionError, ParseError, SchemaError
from attrinfer.graph import AttributeSchema
from attrinfer.model import (
    ModelDims,
    ModelParams,
    decode,
    discriminate,
    encode_gnn,
    encode_mlp,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from attrinfer.numerics import make_rng

SCHEMA = AttributeSchema.from_counts([3, 2])
DIMS = ModelDims(n_features=5, enc_hidden=6, latent=4, gcn_hidden=5, dec_hidden=7)


@pytest.fixture
def params():
    return init_params(DIMS, make_rng(0))


def relu(v):
    return v if v > 0 else 0.0


def test_init_shapes_and_zero_biases(params):
    assert params.mlp["W1"].shape == (5, 6) and params.mlp["W2"].shape == (6, 4)
    assert params.gcn["W0"].shape == (4, 5) and params.gcn["W1"].shape == (5, 8)
    assert params.decoder["W1"].shape == (4, 7) and params.decoder["W2"].shape == (7, 5)
    assert [params.disc[f"W{i}"].shape for i in (1, 2, 3)] == [(4, 16), (16, 4), (4, 1)]
    for group in (params.mlp, params.decoder, params.disc):
        for k, v in group.items():
            if k.startswith("b"):
                assert not v.any()
    limit = np.sqrt(6 / (5 + 6))
    assert np.abs(params.mlp["W1"]).max() <= limit
    assert not params.head


def test_init_deterministic():
    a = init_params(DIMS, make_rng(3)).fingerprints()
    assert a == init_params(DIMS, make_rng(3)).fingerprints()
    assert a != init_params(DIMS, make_rng(4)).fingerprints()


# ------------------------------------------------------------ MLP encoder


def test_encode_mlp_zero_row(params):
    assert not encode_mlp(np.zeros((2, 5)), params).any()


def test_encode_mlp_scalar_oracle():
    p = ModelParams()
    w1, b1 = np.array([[1.0, -2.0], [0.5, 1.0]]), np.array([0.1, -0.3])
    w2, b2 = np.array([[2.0, 0.0], [-1.0, 3.0]]), np.array([0.0, 0.5])
    p.mlp = {"W1": w1, "b1": b1, "W2": w2, "b2": b2}
    x = np.array([[1.0, 2.0], [-1.0, 0.5]])
    expected = np.zeros((2, 2))
    for r in range(2):
        h = [relu(sum(x[r, i] * w1[i, j] for i in range(2)) + b1[j]) for j in range(2)]
        for c in range(2):
            expected[r, c] = sum(h[j] * w2[j, c] for j in range(2)) + b2[c]
    np.testing.assert_allclose(encode_mlp(x, p), expected, atol=1e-15)


def test_encode_mlp_row_function_and_shape_error(params):
    x = np.tile(make_rng(1).random((1, 5)), (3, 1))
    z = encode_mlp(x, params)
    assert np.array_equal(z[0], z[1]) and np.array_equal(z[1], z[2])
    with pytest.raises(DimensionError):
        encode_mlp(np.zeros((2, 4)), params)


# ------------------------------------------------------------ GCN encoder


def test_encode_gnn_zero_noise(params):
    z_m = make_rng(2).standard_normal((3, 4))
    a = sp.identity(3, format="csr")
    mu, lv, z_u = encode_gnn(z_m, a, params, np.zeros((3, 4)))
    np.testing.assert_array_equal(z_u, mu)


def test_encode_gnn_reparameterisation_identity(params):
    rng = make_rng(3)
    z_m, eps = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    mu, lv, z_u = encode_gnn(z_m, sp.identity(3, format="csr"), params, eps)
    np.testing.assert_array_equal(z_u, mu + np.exp(0.5 * lv) * eps)


def test_encode_gnn_identity_adjacency_is_local(params):
    rng = make_rng(4)
    z_m = rng.standard_normal((4, 4))
    eye = sp.identity(4, format="csr")
    mu, lv, _ = encode_gnn(z_m, eye, params, np.zeros((4, 4)))
    z2 = z_m.copy()
    z2[3] += 5.0
    mu2, lv2, _ = encode_gnn(z2, eye, params, np.zeros((4, 4)))
    np.testing.assert_array_equal(mu[:3], mu2[:3])
    np.testing.assert_array_equal(lv[:3], lv2[:3])
    assert not np.array_equal(mu[3], mu2[3])


def test_encode_gnn_path_matches_dense_oracle(params):
    rng = make_rng(5)
    a = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    d = np.diag(1 / np.sqrt(a.sum(1)))
    a_norm = d @ a @ d
    z_m, eps = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    out = a_norm @ np.maximum(a_norm @ z_m @ params.gcn["W0"], 0) @ params.gcn["W1"]
    mu, lv, z_u = encode_gnn(z_m, sp.csr_matrix(a_norm), params, eps)
    np.testing.assert_allclose(mu, out[:, :4], atol=1e-14)
    np.testing.assert_allclose(lv, out[:, 4:], atol=1e-14)
    np.testing.assert_allclose(z_u, out[:, :4] + np.exp(0.5 * out[:, 4:]) * eps, atol=1e-14)


def test_encode_gnn_row_equivariance(params):
    rng = make_rng(6)
    z_m, eps = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
    eye = sp.identity(5, format="csr")
    perm = rng.permutation(5)
    base = encode_gnn(z_m, eye, params, eps)
    permuted = encode_gnn(z_m[perm], eye, params, eps[perm])
    for a, b in zip(base, permuted):
        np.testing.assert_allclose(a[perm], b, atol=1e-14)


def test_encode_gnn_shape_errors(params):
    with pytest.raises(DimensionError):
        encode_gnn(np.zeros((3, 4)), sp.identity(4, format="csr"), params, np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        encode_gnn(np.zeros((3, 4)), sp.identity(3, format="csr"), params, np.zeros((3, 2)))


# ---------------------------------------------------------------- decoder


def test_decode_zero_weights_uniform(params):
    p = params.copy()
    p.decoder = {k: np.zeros_like(v) for k, v in p.decoder.items()}
    out = decode(np.zeros((2, 4)), p, SCHEMA)
    np.testing.assert_allclose(out, [[1 / 3] * 3 + [0.5] * 2] * 2)


@pytest.mark.parametrize("seed", range(5))
def test_decode_blocks_normalised(seed):
    rng = make_rng(seed)
    p = init_params(DIMS, rng)
    out = decode(rng.standard_normal((6, 4)) * 5, p, SCHEMA)
    for a, b in SCHEMA.blocks:
        np.testing.assert_allclose(out[:, a:b].sum(1), 1.0, atol=1e-9)


def test_decode_shared_weights(params):
    z = make_rng(7).standard_normal((3, 4))
    assert np.array_equal(decode(z, params, SCHEMA), decode(z.copy(), params, SCHEMA))
    with pytest.raises(DimensionError):
        decode(np.zeros((3, 5)), params, SCHEMA)


# ---------------------------------------------------------- discriminator


def test_discriminator_zero_weights(params):
    p = params.copy()
    p.disc = {k: np.zeros_like(v) for k, v in p.disc.items()}
    np.testing.assert_array_equal(discriminate(make_rng(0).standard_normal((4, 4)), p), 0.5)


def test_discriminator_scalar_oracle():
    import math

    p = ModelParams()
    p.disc = {
        "W1": np.array([[1.0, -1.0], [0.5, 2.0]]), "b1": np.array([0.0, 0.1]),
        "W2": np.array([[1.0], [-0.5]]), "b2": np.array([0.2]),
        "W3": np.array([[1.5]]), "b3": np.array([-0.3]),
    }
    z = np.array([[0.4, -0.2], [1.0, 1.0]])
    expected = []
    for r in z:
        h1 = [relu(r[0] * p.disc["W1"][0, j] + r[1] * p.disc["W1"][1, j] + p.disc["b1"][j]) for j in range(2)]
        h2 = relu(h1[0] * 1.0 + h1[1] * -0.5 + 0.2)
        expected.append(1 / (1 + math.exp(-(h2 * 1.5 - 0.3))))
    np.testing.assert_allclose(discriminate(z, p), expected, atol=1e-15)


def test_discriminator_row_function(params):
    z = np.tile(make_rng(8).standard_normal((1, 4)), (3, 1))
    s = discriminate(z, params)
    assert s[0] == s[1] == s[2] and 0 < s[0] < 1


# ------------------------------------------------------------- checkpoint


def test_checkpoint_roundtrip(tmp_path, params):
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params, SCHEMA, {"seed": 1})
    loaded, config, _ = load_checkpoint(path, SCHEMA)
    assert loaded.fingerprints() == params.fingerprints()
    assert config == {"seed": 1}


def test_checkpoint_rejects_other_schema(tmp_path, params):
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params, SCHEMA, {})
    with pytest.raises(SchemaError):
        load_checkpoint(path, AttributeSchema.from_counts([2, 3]))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_checkpoint(path)
    path.write_text('{"format": "other"}')
    with pytest.raises(ParseError):
        load_checkpoint(path)
