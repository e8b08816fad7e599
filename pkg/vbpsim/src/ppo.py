# Copyright 2026 The vbpsim developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Proximal policy optimisation on top of :mod:`vbpsim.src.networks`:
generalised advantage estimation, the clipped surrogate and value losses
with analytic gradients, and the epoch loop with KL based early stopping.
"""
from collections import namedtuple
import numpy as np
from vermouth.log_helpers import StyleAdapter, get_logger
from vbpsim import jit
from .networks import Adam, clip_grad_norm, gaussian_entropy

LOGGER = StyleAdapter(get_logger(__name__))

PpoConfig = namedtuple("PpoConfig", ["lr", "gamma", "lam", "clip",
                                     "entropy_coef_start", "entropy_coef_end",
                                     "kl_stop", "epochs", "minibatch_size",
                                     "max_grad_norm", "value_clip",
                                     "value_clip_range", "hidden",
                                     "log_std_init", "log_std_bounds"],
                       defaults=(5e-5, 0.99, 0.95, 0.2, 0.005, 0.001, 0.01, 4,
                                 None, 0.5, False, 10.0, 128, 0.0, (-5.0, 1.0)))

PpoBatch = namedtuple("PpoBatch", ["obs", "actions", "old_logp", "advantages",
                                   "returns", "critic_inputs", "old_values"])

UpdateStats = namedtuple("UpdateStats", ["policy_loss", "value_loss", "entropy",
                                         "approx_kl", "stopped_early", "epochs_run"])

# discount band of the bidding game
GAMMA_BAND = (0.9, 1.0)


class NonFiniteUpdateError(ArithmeticError):
    """Raised when a PPO update produces non-finite losses or gradients."""


def validate_ppo_config(config):
    """
    Check a PpoConfig; raises ValueError for impossible values and warns
    when gamma leaves the discount band of the game.
    """
    positive = ("lr", "entropy_coef_start", "entropy_coef_end", "kl_stop",
                "epochs", "hidden", "value_clip_range")
    for name in positive:
        if not getattr(config, name) > 0:
            raise ValueError("PPO parameter {} must be positive, got {}."
                             .format(name, getattr(config, name)))
    if not 0 < config.clip < 1:
        raise ValueError("PPO clip must lie in (0, 1), got {}.".format(config.clip))
    if not 0 < config.gamma <= 1:
        raise ValueError("gamma must lie in (0, 1], got {}.".format(config.gamma))
    if not 0 <= config.lam <= 1:
        raise ValueError("lam must lie in [0, 1], got {}.".format(config.lam))
    if config.minibatch_size is not None and config.minibatch_size < 1:
        raise ValueError("minibatch_size must be positive.")
    if config.max_grad_norm is not None and config.max_grad_norm <= 0:
        raise ValueError("max_grad_norm must be positive.")
    low, high = config.log_std_bounds
    if not low < high:
        raise ValueError("log_std bounds must be increasing.")
    if not GAMMA_BAND[0] <= config.gamma <= GAMMA_BAND[1]:
        LOGGER.warning("gamma {} lies outside the usual discount band [{}, {}].",
                       config.gamma, *GAMMA_BAND)
    return config


def _gae_kernel(rewards, values, bootstrap, gamma, lam):
    n_steps = rewards.shape[0]
    advantages = np.zeros(n_steps)
    running = 0.0
    for step in range(n_steps - 1, -1, -1):
        if step == n_steps - 1:
            next_value = bootstrap
        else:
            next_value = values[step + 1]
        delta = rewards[step] + gamma * next_value - values[step]
        running = delta + gamma * lam * running
        advantages[step] = running
    return advantages

gae_kernel = jit(_gae_kernel)


def gae(rewards, values, bootstrap, gamma, lam):
    """
    Generalised advantage estimation.

    Parameters
    ----------
    rewards: array-like
    values: array-like
        value estimate of every visited state
    bootstrap: float
        value of the state after the last step; 0 at the end of an episode
    gamma: float
    lam: float

    Returns
    -------
    numpy.ndarray
        advantages
    numpy.ndarray
        returns, advantages + values
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values differ in length ({} vs {})."
                         .format(len(rewards), len(values)))
    advantages = gae_kernel(rewards, values, float(bootstrap), float(gamma), float(lam))
    return advantages, advantages + values


def anneal_entropy(progress, config):
    """
    Linear entropy coefficient schedule; `progress` runs from 0 (first
    update) to 1 (last update).
    """
    progress = min(max(float(progress), 0.0), 1.0)
    start, end = config.entropy_coef_start, config.entropy_coef_end
    return start + (end - start) * progress


def standardize(values):
    values = np.asarray(values, dtype=float)
    centred = values - values.mean()
    std = centred.std()
    if std < 1e-8:
        return centred
    return centred / std


def policy_loss(policy, obs, actions, old_logp, advantages, clip, entropy_coef):
    """
    Negative clipped surrogate minus the entropy bonus, with its gradient.

    Parameters
    ----------
    policy: GaussianPolicy
    obs: numpy.ndarray
        (batch, obs_dim)
    actions, old_logp, advantages: numpy.ndarray
        (batch,)
    clip: float
    entropy_coef: float

    Returns
    -------
    float
        the loss
    list[numpy.ndarray]
        gradients ordered as ``policy.parameters()``
    dict
        ratio, approx_kl, entropy and clip_fraction
    """
    n_samples = len(actions)
    output, activations = policy.mean_net.forward_cache(obs)
    mean = output[:, 0]
    log_std = policy.log_std[0]
    std = np.exp(log_std)
    z_score = (actions - mean) / std
    logp = -0.5 * z_score ** 2 - log_std - 0.5 * np.log(2 * np.pi)

    ratio = np.exp(logp - old_logp)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1 - clip, 1 + clip) * advantages
    surrogate = np.minimum(unclipped, clipped)
    entropy = gaussian_entropy(log_std)
    loss = -surrogate.mean() - entropy_coef * entropy

    # d loss / d logp vanishes where the clipped branch is the minimum
    grad_logp = np.where(unclipped <= clipped, -ratio * advantages / n_samples, 0.0)
    grad_mean = grad_logp * z_score / std
    grads = policy.mean_net.backward(activations, grad_mean[:, None])
    grad_log_std = np.sum(grad_logp * (z_score ** 2 - 1.0)) - entropy_coef
    grads.append(np.array([grad_log_std]))

    info = {"ratio": ratio,
            "approx_kl": float(np.mean(old_logp - logp)),
            "entropy": entropy,
            "clip_fraction": float(np.mean(np.abs(ratio - 1) > clip))}
    return float(loss), grads, info


def value_loss(critic, inputs, returns, old_values=None, clip_range=None):
    """
    Mean squared error (halved) of the critic, optionally with value
    clipping around `old_values`.

    Parameters
    ----------
    critic: Mlp
    inputs: numpy.ndarray
        (batch, critic input width)
    returns: numpy.ndarray
        (batch, n_outputs)
    old_values: numpy.ndarray
        predictions made while collecting the batch; needed for clipping
    clip_range: float
        None disables clipping

    Returns
    -------
    float
    list[numpy.ndarray]
    """
    values, activations = critic.forward_cache(inputs)
    returns = np.asarray(returns, dtype=float).reshape(values.shape)
    n_elements = values.size
    error = values - returns
    if clip_range is None or old_values is None:
        loss = 0.5 * np.mean(error ** 2)
        grad_values = error / n_elements
    else:
        old_values = np.asarray(old_values, dtype=float).reshape(values.shape)
        delta = values - old_values
        clipped_values = old_values + np.clip(delta, -clip_range, clip_range)
        clipped_error = clipped_values - returns
        use_plain = error ** 2 >= clipped_error ** 2
        loss = 0.5 * np.mean(np.maximum(error ** 2, clipped_error ** 2))
        inside = np.abs(delta) <= clip_range
        grad_values = np.where(use_plain, error, np.where(inside, clipped_error, 0.0)) / n_elements
    grads = critic.backward(activations, grad_values)
    return float(loss), grads


def _minibatches(n_samples, size, rng):
    if not size or size >= n_samples:
        yield np.arange(n_samples)
        return
    order = rng.permutation(n_samples)
    for start in range(0, n_samples, size):
        yield order[start:start + size]


def _check_finite(label, loss, grads):
    if not np.isfinite(loss) or not all(np.all(np.isfinite(grad)) for grad in grads):
        raise NonFiniteUpdateError("Non-finite {} encountered during the PPO update.".format(label))


def policy_update(policy, optimizer, batch, config, entropy_coef, rng=None):
    """
    Run up to ``config.epochs`` epochs of clipped surrogate ascent on
    `policy`. After every epoch the approximate KL divergence to the
    behaviour policy is measured on the whole batch; once it exceeds
    ``config.kl_stop`` the remaining epochs are skipped.

    Returns
    -------
    dict
        policy_loss, entropy, approx_kl, stopped_early and epochs_run
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    obs = np.asarray(batch.obs, dtype=float)
    actions = np.asarray(batch.actions, dtype=float)
    old_logp = np.asarray(batch.old_logp, dtype=float)
    advantages = standardize(batch.advantages)

    losses = []
    approx_kl = 0.0
    stopped_early = False
    epochs_run = 0
    for _ in range(config.epochs):
        for idx in _minibatches(len(actions), config.minibatch_size, rng):
            loss, grads, _ = policy_loss(policy, obs[idx], actions[idx], old_logp[idx],
                                         advantages[idx], config.clip, entropy_coef)
            _check_finite("policy loss", loss, grads)
            grads, _ = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            policy.clamp_log_std()
            losses.append(loss)
        epochs_run += 1
        approx_kl = float(np.mean(old_logp - policy.log_prob(obs, actions)))
        if not np.isfinite(approx_kl):
            raise NonFiniteUpdateError("Non-finite KL estimate encountered during the PPO update.")
        if approx_kl > config.kl_stop:
            stopped_early = True
            LOGGER.debug("KL {:.5f} above {} after epoch {}; stopping update.",
                         approx_kl, config.kl_stop, epochs_run)
            break
    return {"policy_loss": float(np.mean(losses)),
            "entropy": policy.entropy(),
            "approx_kl": approx_kl,
            "stopped_early": stopped_early,
            "epochs_run": epochs_run}


def value_update(critic, optimizer, inputs, returns, old_values, config, rng=None):
    """
    Fit `critic` to `returns` for ``config.epochs`` epochs. Value
    clipping is used when ``config.value_clip`` is set.

    Returns
    -------
    float
        mean value loss over all minibatch steps
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs = np.asarray(inputs, dtype=float)
    returns = np.asarray(returns, dtype=float).reshape(len(inputs), -1)
    old_values = np.asarray(old_values, dtype=float).reshape(returns.shape)
    clip_range = config.value_clip_range if config.value_clip else None
    losses = []
    for _ in range(config.epochs):
        for idx in _minibatches(len(inputs), config.minibatch_size, rng):
            loss, grads = value_loss(critic, inputs[idx], returns[idx],
                                     old_values[idx], clip_range)
            _check_finite("value loss", loss, grads)
            grads, _ = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            losses.append(loss)
    return float(np.mean(losses))


def ppo_update(policy, critic, batch, config, entropy_coef,
               policy_optimizer=None, value_optimizer=None, rng=None):
    """
    One PPO update of an actor-critic pair on `batch`.

    Parameters
    ----------
    policy: GaussianPolicy
    critic: Mlp or None
        None skips the value update, e.g. when a shared critic is
        updated separately
    batch: PpoBatch
    config: PpoConfig
    entropy_coef: float
    policy_optimizer, value_optimizer: Adam
        persistent optimizers; fresh ones are created when omitted

    Returns
    -------
    UpdateStats
    """
    if len(batch.actions) == 0:
        raise ValueError("Cannot update on an empty batch.")
    if policy_optimizer is None:
        policy_optimizer = Adam(policy.parameters(), config.lr)
    stats = policy_update(policy, policy_optimizer, batch, config, entropy_coef, rng)

    loss_value = float("nan")
    if critic is not None:
        if value_optimizer is None:
            value_optimizer = Adam(critic.parameters(), config.lr)
        loss_value = value_update(critic, value_optimizer, batch.critic_inputs,
                                  batch.returns, batch.old_values, config, rng)
    return UpdateStats(policy_loss=stats["policy_loss"],
                       value_loss=loss_value,
                       entropy=stats["entropy"],
                       approx_kl=stats["approx_kl"],
                       stopped_early=stats["stopped_early"],
                       epochs_run=stats["epochs_run"])
