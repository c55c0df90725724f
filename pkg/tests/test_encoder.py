import numpy as np
import pytest
import torch

from mlmatch.encoder import (
    DTYPE, DualEncoder, EncoderConfig, flat_parameters, init_encoders, make_configs, parameter_count,
    parameter_gradients, set_flat_parameters,
)

TINY = {"model_dim": 8, "layers": 1, "heads": 1, "feedforward_dim": 16, "max_len": 16}


def _features(rng, n, dim):
    x = np.zeros((n, dim))
    x[np.arange(n), rng.integers(0, dim, n)] = 1.0
    return x


def test_reference_size_near_target():
    m, l = make_configs("reference")
    count = parameter_count(DualEncoder(m, l))
    assert count == 3_478_016
    assert abs(count - 3.7e6) / 3.7e6 < 0.10


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(10, model_dim=10, heads=3)
    with pytest.raises(ValueError):
        DualEncoder(EncoderConfig(10, model_dim=8, heads=1), EncoderConfig(10, model_dim=16, heads=1))
    cfg = EncoderConfig(10, model_dim=8, heads=2)
    assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


def test_unit_rows_and_seeded_init(rng):
    m, l = make_configs(**TINY)
    a, b = init_encoders(m, l, seed=3), init_encoders(m, l, seed=3)
    assert torch.equal(flat_parameters(a), flat_parameters(b))
    assert not torch.equal(flat_parameters(a), flat_parameters(init_encoders(m, l, seed=4)))
    out = a.encode(_features(rng, 5, 43), "lyrics")
    assert out.dtype == DTYPE and out.shape == (5, 8)
    assert torch.allclose(out.norm(dim=1), torch.ones(5, dtype=DTYPE))


def test_padding_does_not_leak(rng):
    m, l = make_configs(**TINY)
    model = init_encoders(m, l, seed=0)
    feats = [_features(rng, k, 177) for k in (3, 7, 1)]
    emb, lens = model.encode_padded(feats, "melody")
    assert lens.tolist() == [3, 7, 1]
    for k, f in enumerate(feats):
        single = model.encode(f, "melody")
        assert torch.allclose(emb[k, :len(f)], single, atol=1e-12)
        assert torch.all(emb[k, len(f):] == 0)


def test_permutation_equivariance_without_positions(rng):
    m, l = make_configs(**{**TINY, "positional": False})
    model = init_encoders(m, l, seed=1)
    x = _features(rng, 6, 43)
    perm = np.array([1, 0, 2, 3, 5, 4])
    assert torch.allclose(model.encode(x[perm], "lyrics"), model.encode(x, "lyrics")[perm], atol=1e-12)


def test_positions_break_equivariance(rng):
    m, l = make_configs(**TINY)
    model = init_encoders(m, l, seed=1)
    x = _features(rng, 6, 43)
    perm = np.array([1, 0, 2, 3, 5, 4])
    assert not torch.allclose(model.encode(x[perm], "lyrics"), model.encode(x, "lyrics")[perm], atol=1e-6)


def test_too_long_and_bad_width(rng):
    m, l = make_configs(**TINY)
    model = init_encoders(m, l)
    with pytest.raises(ValueError):
        model.encode(_features(rng, 17, 43), "lyrics")
    with pytest.raises(ValueError):
        model.encode(_features(rng, 3, 42), "lyrics")
    with pytest.raises(ValueError):
        model.encode(_features(rng, 3, 43), "audio")


def test_parameter_gradients_match_finite_differences(rng):
    m, l = make_configs(**TINY)
    model = init_encoders(m, l, seed=2)
    x = _features(rng, 5, 177)
    out = model.encode(x, "melody")
    grads = parameter_gradients(model, out, torch.ones_like(out))
    analytic = torch.cat([g.reshape(-1) for g in grads.values()])
    theta = flat_parameters(model)
    idx = rng.choice(len(theta), 150, replace=False)
    h = 1e-4
    fd = []
    with torch.no_grad():
        for i in idx:
            t = theta.clone()
            t[i] += h
            set_flat_parameters(model, t)
            up = model.encode(x, "melody").sum().item()
            t[i] -= 2 * h
            set_flat_parameters(model, t)
            down = model.encode(x, "melody").sum().item()
            fd.append((up - down) / (2 * h))
    set_flat_parameters(model, theta)
    fd = np.array(fd)
    an = analytic[idx].numpy()
    assert np.linalg.norm(fd - an) / np.linalg.norm(an) < 1e-3
    # lyrics parameters are untouched by a melody forward pass
    assert all(torch.all(g == 0) for n, g in grads.items() if n.startswith("lyrics."))
