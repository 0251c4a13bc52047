import math

import numpy as np
import pytest
import torch

from arpolib.internal.errors import NumericGuardError, ShapeError
from arpolib.internal.modules import parameter_digest
from arpolib.policy import (
    PolicyConfig,
    PolicyModel,
    PolicyNetwork,
    adversarial_kl,
    categorical_kl,
    policy_step,
    ppo_surrogate,
)
from arpolib.policy.policy import _adapt_kl_coeff
from arpolib.rollout import RolloutBatch, sample_actions


def random_images(n, size=16, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n, size, size, 3)).astype(np.float32)


def make_batch(model, n=32, n_envs=4, seed=0):
    rng = np.random.default_rng(seed)
    observations = random_images(n, seed=seed)
    action_dists, values = model.action_dist(observations)
    advantages = rng.normal(size=n)
    return RolloutBatch(
        observations=observations,
        actions=sample_actions(action_dists, rng),
        rewards=rng.normal(size=n),
        values=values,
        action_dists=action_dists,
        dones=np.zeros(n, dtype=bool),
        advantages=advantages,
        returns=advantages + values,
        n_envs=n_envs,
        last_values=np.zeros(n_envs),
        style_ids=np.zeros(n, dtype=np.int64),
    )


def double_model(config=PolicyConfig(), seed=0):
    torch.manual_seed(seed)
    return PolicyModel(PolicyNetwork(16, hidden=32).double(), config)


def test_action_dist_is_simplex():
    model = PolicyModel.build(16, seed=1)
    probabilities, values = model.action_dist(random_images(6))

    assert probabilities.shape == (6, 5)
    assert values.shape == (6,)
    assert np.all(probabilities >= 0)
    np.testing.assert_allclose(probabilities.sum(axis=1), 1.0, atol=1e-12)


def test_zero_weights_give_uniform_policy():
    model = PolicyModel.build(16)
    with torch.no_grad():
        for parameter in model.network.parameters():
            parameter.zero_()
    probabilities, values = model.action_dist(random_images(3))

    np.testing.assert_allclose(probabilities, 0.2)
    np.testing.assert_allclose(values, 0.0)


def test_batched_equals_single():
    model = PolicyModel.build(16, seed=2)
    images = random_images(4)
    batched, _ = model.action_dist(images)
    for index, image in enumerate(images):
        single, _ = model.action_dist(image)
        np.testing.assert_allclose(single[0], batched[index], atol=1e-6)


def test_wrong_image_size_is_rejected():
    model = PolicyModel.build(16)
    with pytest.raises(ShapeError):
        model.action_dist(random_images(2, size=8))


def test_greedy_act_picks_most_probable():
    model = PolicyModel.build(16, seed=3)
    images = random_images(5)
    probabilities, _ = model.action_dist(images)

    actions = model.act(images, np.random.default_rng(0), greedy=True)
    assert np.array_equal(actions, np.argmax(probabilities, axis=1))


@pytest.mark.parametrize(
    "new, advantage, clip, expected",
    [
        (0.6, 1.0, 0.2, -1.2),
        (0.75, 1.0, 0.2, -1.2),
        (0.25, -1.0, 0.2, 0.8),
        (0.75, 1.0, math.inf, -1.5),
        (0.25, 1.0, 0.2, -0.5),
    ],
)
def test_surrogate_oracle(new, advantage, clip, expected):
    probabilities = torch.tensor([[new, 1.0 - new]], dtype=torch.float64)
    old = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
    loss = ppo_surrogate(
        probabilities,
        old,
        torch.tensor([0]),
        torch.tensor([advantage], dtype=torch.float64),
        clip,
    )

    assert loss.item() == pytest.approx(expected, abs=1e-12)


def test_clipped_and_unclipped_agree_inside_range():
    generator = torch.Generator().manual_seed(0)
    old = torch.softmax(torch.randn(50, 5, generator=generator, dtype=torch.float64), 1)
    actions = torch.randint(0, 5, (50,), generator=generator)
    ratios = 0.8 + 0.4 * torch.rand(50, generator=generator, dtype=torch.float64)
    new = old.clone()
    rows = torch.arange(50)
    new[rows, actions] = old[rows, actions] * ratios
    advantages = torch.randn(50, generator=generator, dtype=torch.float64)

    clipped = ppo_surrogate(new, old, actions, advantages, 0.2)
    unclipped = ppo_surrogate(new, old, actions, advantages, math.inf)
    assert clipped.item() == pytest.approx(unclipped.item(), abs=1e-9)


def test_zero_behaviour_probability_is_guarded():
    with pytest.raises(NumericGuardError):
        ppo_surrogate(
            torch.tensor([[0.5, 0.5]]),
            torch.tensor([[0.0, 1.0]]),
            torch.tensor([0]),
            torch.tensor([1.0]),
        )


def test_kl_oracle():
    clean = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
    perturbed = torch.tensor([[0.25, 0.75]], dtype=torch.float64)
    expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)

    assert adversarial_kl(clean, perturbed).item() == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.1438, abs=1e-4)


def test_kl_is_non_negative():
    generator = torch.Generator().manual_seed(0)
    p = torch.softmax(torch.randn(200, 5, generator=generator), dim=1)
    q = torch.softmax(torch.randn(200, 5, generator=generator), dim=1)

    assert torch.all(categorical_kl(p, q) >= 0)
    assert adversarial_kl(p, p).item() == 0.0


def test_kl_shapes_are_checked():
    with pytest.raises(ShapeError):
        categorical_kl(torch.ones(2, 5) / 5, torch.ones(2, 4) / 4)


def test_total_matches_components():
    config = PolicyConfig(num_sgd_iter=1, minibatch_size=32, beta1=5.0)
    model = double_model(config)
    batch = make_batch(model)
    translated = random_images(32, seed=9)

    report = policy_step(model, batch, translated, np.random.default_rng(0))

    expected = (
        report.surrogate
        + config.c_v * report.value_loss
        - config.c_e * report.entropy
        + config.beta1 * report.adv_kl
    )
    assert report.total == pytest.approx(expected, abs=1e-9)
    assert report.adv_kl > 0.0


def test_untranslated_batch_has_no_divergence():
    config = PolicyConfig(num_sgd_iter=1, minibatch_size=32)
    model = double_model(config)
    batch = make_batch(model)

    report = policy_step(model, batch, batch.observations, np.random.default_rng(0))

    assert report.adv_kl == 0.0
    expected = (
        report.surrogate + config.c_v * report.value_loss - config.c_e * report.entropy
    )
    assert report.total == pytest.approx(expected, abs=1e-9)


def test_zero_beta_matches_plain_ppo():
    config = PolicyConfig(beta1=0.0, minibatch_size=8, num_sgd_iter=2)
    with_translation = PolicyModel.build(16, config, seed=5)
    plain = PolicyModel.build(16, config, seed=5)
    batch = make_batch(plain)

    first = policy_step(
        with_translation, batch, random_images(32, seed=3), np.random.default_rng(1)
    )
    second = policy_step(plain, batch, None, np.random.default_rng(1))

    assert parameter_digest(with_translation.network) == parameter_digest(plain.network)
    assert first.surrogate == second.surrogate
    assert first.total == second.total


def test_update_changes_parameters():
    model = PolicyModel.build(16, PolicyConfig(minibatch_size=8), seed=0)
    digest = parameter_digest(model.network)

    policy_step(model, make_batch(model), None, np.random.default_rng(0))
    assert parameter_digest(model.network) != digest


def test_mismatched_translations_are_rejected():
    model = PolicyModel.build(16)
    with pytest.raises(ShapeError):
        policy_step(model, make_batch(model), random_images(8), np.random.default_rng(0))


def test_kl_coefficient_adapts():
    model = PolicyModel.build(16, PolicyConfig(kl_coeff=1.0, kl_target=0.01))

    _adapt_kl_coeff(model, 0.05)
    assert model.kl_coeff == pytest.approx(1.5)
    _adapt_kl_coeff(model, 0.001)
    assert model.kl_coeff == pytest.approx(0.75)
    _adapt_kl_coeff(model, 0.01)
    assert model.kl_coeff == pytest.approx(0.75)


def test_report_keeps_coefficient_used_by_update():
    config = PolicyConfig(kl_coeff=0.2, kl_target=1e3, minibatch_size=16)
    model = PolicyModel.build(16, config)

    report = policy_step(model, make_batch(model), None, np.random.default_rng(0))
    assert report.kl_coeff == pytest.approx(0.2)
    assert model.kl_coeff == pytest.approx(0.1)


def test_checkpoint_round_trip(tmp_path):
    model = PolicyModel.build(16, PolicyConfig(minibatch_size=8, kl_coeff=0.3), seed=1)
    policy_step(model, make_batch(model), None, np.random.default_rng(0))
    model.save(tmp_path / "policy.pt")

    restored = PolicyModel.build(16, PolicyConfig(minibatch_size=8), seed=2)
    restored.restore(tmp_path / "policy.pt")
    assert parameter_digest(restored.network) == parameter_digest(model.network)
    assert restored.kl_coeff == model.kl_coeff
    images = random_images(3, seed=4)
    np.testing.assert_array_equal(
        restored.action_dist(images)[0], model.action_dist(images)[0]
    )
