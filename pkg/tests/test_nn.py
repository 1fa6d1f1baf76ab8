import numpy as np
import pytest

from tiprdc import tensor as T
from tiprdc.nn import (
    AdamState,
    Classifier,
    ConfigError,
    Critic,
    CriticSpec,
    Extractor,
    ModelSpec,
    adam_step,
    glorot_uniform,
    load_checkpoint,
    param_digest,
    save_checkpoint,
    zero_params,
)
from tiprdc.objectives import cross_entropy_loss
from tiprdc.tensor import GradientError, ShapeError, Tensor, grad_check


def test_zero_weights_give_zero_logits_and_uniform_ce():
    clf = Classifier(ModelSpec(5, (7,), 3), seed=1)
    zero_params(clf)
    z = Tensor(np.random.default_rng(0).standard_normal((4, 5)))
    logits = clf.classify(z)
    np.testing.assert_array_equal(logits.data, 0.0)
    assert cross_entropy_loss(logits, [0, 1, 2, 0]).item() == pytest.approx(np.log(3), abs=1e-12)


def test_glorot_variance():
    rng = np.random.default_rng(0)
    w = glorot_uniform(200, 300, rng)
    assert w.var() == pytest.approx(2.0 / 500, rel=0.03)


def test_same_seed_same_init():
    spec = ModelSpec(4, (8, 8), 2)
    assert param_digest(Extractor(spec, 3)) == param_digest(Extractor(spec, 3))
    assert param_digest(Extractor(spec, 3)) != param_digest(Extractor(spec, 4))


def test_input_width_mismatch():
    ext = Extractor(ModelSpec(4, (8,), 2))
    with pytest.raises(ShapeError):
        ext.extract(Tensor(np.ones((3, 5))))


@pytest.mark.parametrize(
    "kwargs",
    [dict(hidden=()), dict(activation="swish"), dict(output_dim=0), dict(activation=("relu",), hidden=(3, 3))],
)
def test_model_spec_validation(kwargs):
    base = dict(input_dim=3, hidden=(4,), output_dim=2)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        ModelSpec(**base)


def test_composition_is_ordinary_function_composition():
    rng = np.random.default_rng(2)
    ext = Extractor(ModelSpec(6, (5,), 3, activation="tanh"), 0)
    clf = Classifier(ModelSpec(3, (4,), 2), 1)
    x = Tensor(rng.standard_normal((9, 6)))
    direct = clf.classify(ext.extract(x)).data
    via_numpy = clf.classify(Tensor(ext.extract(x).data)).data
    np.testing.assert_array_equal(direct, via_numpy)


def test_mlp_parameter_gradients():
    rng = np.random.default_rng(5)
    clf = Classifier(ModelSpec(3, (4,), 3, activation="tanh"), 0)
    x = rng.standard_normal((6, 3))
    labels = rng.integers(0, 3, size=6)
    for i, p in enumerate(clf.params):
        def f(w, i=i):
            params = list(clf.params)
            params[i] = w
            h = T.tanh(T.bias_add(T.matmul(Tensor(x), params[0]), params[1]))
            return cross_entropy_loss(T.bias_add(T.matmul(h, params[2]), params[3]), labels)

        assert grad_check(f, p.data.copy()).passed


def test_critic_injection_layers():
    spec = CriticSpec(x_dim=5, z_dim=3, u_dim=2, hidden=(7, 4))
    assert spec.layer_shapes() == [(5, 7), (7 + 3, 4), (4 + 2, 1)]
    critic = Critic(spec, 0)
    n = 6
    out = critic(Tensor(np.ones((n, 5))), Tensor(np.ones((n, 3))), T.one_hot(np.zeros(n, int), 2))
    assert out.shape == (n, 1)


def test_critic_all_inputs_at_layer_zero():
    spec = CriticSpec(5, 3, 2, hidden=(4,), injection={"x": 0, "z": 0, "u": 0})
    assert spec.layer_shapes() == [(10, 4), (4, 1)]


@pytest.mark.parametrize(
    "injection",
    [{"x": 0, "z": 1}, {"x": 0, "z": 1, "u": 5}, {"x": 1, "z": 1, "u": 2}, {"x": 0, "z": 1, "u": -1}],
)
def test_critic_injection_errors(injection):
    with pytest.raises(ConfigError):
        CriticSpec(5, 3, 2, hidden=(7, 4), injection=injection)


def test_critic_input_shape_error():
    critic = Critic(CriticSpec(5, 3, 2), 0)
    with pytest.raises(ShapeError, match="'z'"):
        critic(Tensor(np.ones((4, 5))), Tensor(np.ones((4, 2))), Tensor(np.ones((4, 2))))


def test_critic_gradient_reaches_z():
    rng = np.random.default_rng(1)
    critic = Critic(CriticSpec(3, 2, 2, hidden=(4, 3), activation="tanh"), 0)
    x = rng.standard_normal((5, 3))
    u = T.one_hot(rng.integers(0, 2, 5), 2)
    rep = grad_check(lambda z: T.sum(critic(Tensor(x), z, u)), rng.standard_normal((5, 2)))
    assert rep.passed


def test_detached_features_block_extractor_gradient():
    ext = Extractor(ModelSpec(4, (5,), 3), 0)
    clf = Classifier(ModelSpec(3, (4,), 2), 1)
    x = Tensor(np.random.default_rng(0).standard_normal((6, 4)))
    loss = cross_entropy_loss(clf.classify(ext.extract(x).detach()), [0, 1, 0, 1, 0, 1])
    T.backward(loss)
    assert all(p.grad is None for p in ext.params)
    assert all(p.grad is not None for p in clf.params)


def test_adam_first_step_moves_by_lr_times_sign():
    w = T.parameter(np.array([1.0, -2.0, 3.0]))
    opt = AdamState([w], lr=0.1)
    w.grad = np.array([0.5, -4.0, 1e-3])
    adam_step(opt)
    np.testing.assert_allclose(w.data, [0.9, -1.9, 2.9], atol=1e-6)


def test_adam_minimizes_quadratic():
    w = T.parameter(np.array(0.0))
    opt = AdamState([w], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        loss = (w - 3.0) * (w - 3.0)
        T.backward(loss)
        adam_step(opt)
    assert w.data == pytest.approx(3.0, abs=1e-2)


def test_adam_needs_gradients():
    w = T.parameter(np.zeros(2))
    with pytest.raises(GradientError):
        adam_step(AdamState([w]))


def test_adam_leaves_old_arrays_untouched():
    w = T.parameter(np.ones(2))
    before = w.data
    w.grad = np.ones(2)
    adam_step(AdamState([w], lr=0.5))
    np.testing.assert_array_equal(before, 1.0)


def test_checkpoint_round_trip(tmp_path):
    ext = Extractor(ModelSpec(4, (5,), 3, output_activation="tanh"), 0)
    clf = Classifier(ModelSpec(3, (4,), 2), 1)
    critic = Critic(CriticSpec(4, 3, 2, hidden=(6, 5)), 2)
    models = {"extractor": ext, "classifier": clf, "critic": critic}
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    h1 = save_checkpoint(p1, models, seed=7, config={"lam": 0.9})
    loaded, header = load_checkpoint(p1)
    assert header["seed"] == 7 and header["config"] == {"lam": 0.9}
    for name, m in models.items():
        assert param_digest(loaded[name]) == param_digest(m)
        assert loaded[name].spec == m.spec
    assert save_checkpoint(p2, loaded, seed=7, config={"lam": 0.9}) == h1
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_other_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ConfigError):
        load_checkpoint(p)
