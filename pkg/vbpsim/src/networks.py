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
Small numpy neural networks with hand written gradients: tanh MLPs,
a Gaussian policy head, the Adam optimizer and JSON checkpoints.
"""
import json
import math
import numpy as np

CHECKPOINT_FORMAT = "vbpsim-checkpoint"
CHECKPOINT_VERSION = 1
LOG_2PI = math.log(2 * math.pi)


def orthogonal(shape, scale, rng):
    """
    Orthogonal matrix of `shape` multiplied by `scale`.
    """
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q_mat, r_mat = np.linalg.qr(flat)
    # fix the sign ambiguity of the decomposition
    q_mat *= np.sign(np.diag(r_mat))
    if rows < cols:
        q_mat = q_mat.T
    return scale * q_mat[:rows, :cols]


class Mlp:
    """
    Fully connected network with tanh on the hidden layers and an
    identity output layer. Weights are stored as (inputs, outputs)
    matrices so that a batch of row vectors can be pushed through with
    a matrix product.

    Parameters
    ----------
    sizes: tuple[int]
        layer widths from input to output, e.g. (10, 128, 128, 1)
    rng: numpy.random.Generator
    final_scale: float
        gain of the orthogonal init of the output layer
    hidden_scale: float
        gain of the orthogonal init of the hidden layers
    """
    def __init__(self, sizes, rng=None, final_scale=1.0, hidden_scale=math.sqrt(2)):
        if len(sizes) < 2:
            raise ValueError("An MLP needs at least an input and an output size.")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = tuple(int(size) for size in sizes)
        self.weights = []
        self.biases = []
        n_layers = len(self.sizes) - 1
        for idx, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = final_scale if idx == n_layers - 1 else hidden_scale
            self.weights.append(orthogonal((n_in, n_out), scale, rng))
            self.biases.append(np.zeros(n_out))

    @property
    def input_dim(self):
        return self.sizes[0]

    @property
    def output_dim(self):
        return self.sizes[-1]

    def parameters(self):
        """
        All parameter arrays, ordered W0, b0, W1, b1, ...
        """
        params = []
        for weight, bias in zip(self.weights, self.biases):
            params.extend([weight, bias])
        return params

    def set_parameters(self, params):
        for idx, param in enumerate(params):
            target = self.weights[idx // 2] if idx % 2 == 0 else self.biases[idx // 2]
            if target.shape != np.shape(param):
                raise ValueError("Parameter {} has shape {}, expected {}."
                                 .format(idx, np.shape(param), target.shape))
            target[...] = param

    def _as_batch(self, inputs):
        inputs = np.asarray(inputs, dtype=float)
        single = inputs.ndim == 1
        batch = np.atleast_2d(inputs)
        if batch.shape[-1] != self.input_dim:
            raise ValueError("Network expects inputs of width {}, got {}."
                             .format(self.input_dim, batch.shape[-1]))
        return batch, single

    def forward_cache(self, inputs):
        """
        Forward pass that also returns the layer activations needed by
        :meth:`backward`.

        Returns
        -------
        numpy.ndarray
            outputs, shape (batch, output_dim)
        list[numpy.ndarray]
            activations, input first
        """
        batch, _ = self._as_batch(inputs)
        activations = [batch]
        hidden = batch
        n_layers = len(self.weights)
        for idx, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            hidden = hidden @ weight + bias
            if idx < n_layers - 1:
                hidden = np.tanh(hidden)
            activations.append(hidden)
        return hidden, activations

    def forward(self, inputs):
        """
        Evaluate the network. A 1D input gives a 1D output, a 2D batch
        gives a 2D output.
        """
        _, single = self._as_batch(inputs)
        output, _ = self.forward_cache(inputs)
        return output[0] if single else output

    __call__ = forward

    def backward(self, activations, grad_output):
        """
        Back-propagate `grad_output`, the gradient of a scalar loss with
        respect to the network output, through the cached activations.

        Returns
        -------
        list[numpy.ndarray]
            gradients in the order of :meth:`parameters`
        """
        grad = np.asarray(grad_output, dtype=float).reshape(activations[-1].shape)
        grads = []
        n_layers = len(self.weights)
        for idx in reversed(range(n_layers)):
            if idx < n_layers - 1:
                # tanh'(z) = 1 - tanh(z)^2
                grad = grad * (1.0 - activations[idx + 1] ** 2)
            grads.append(grad.sum(axis=0))
            grads.append(activations[idx].T @ grad)
            grad = grad @ self.weights[idx].T
        grads.reverse()
        return grads

    def to_dict(self):
        return {"sizes": list(self.sizes),
                "weights": [weight.tolist() for weight in self.weights],
                "biases": [bias.tolist() for bias in self.biases]}

    @classmethod
    def from_dict(cls, payload):
        net = cls(payload["sizes"])
        net.weights = [np.array(weight, dtype=float).reshape(n_in, n_out)
                       for weight, n_in, n_out in zip(payload["weights"],
                                                      net.sizes[:-1], net.sizes[1:])]
        net.biases = [np.array(bias, dtype=float) for bias in payload["biases"]]
        return net


class GaussianPolicy:
    """
    Diagonal Gaussian over a scalar action. The mean comes from an MLP,
    the log standard deviation is a free parameter kept within bounds.
    """
    def __init__(self, obs_dim, hidden=128, rng=None, log_std_init=0.0,
                 log_std_bounds=(-5.0, 1.0)):
        self.mean_net = Mlp((obs_dim, hidden, hidden, 1), rng, final_scale=0.01)
        self.log_std = np.array([float(log_std_init)])
        self.log_std_bounds = tuple(log_std_bounds)
        self.clamp_log_std()

    @property
    def obs_dim(self):
        return self.mean_net.input_dim

    @property
    def std(self):
        return float(np.exp(self.log_std[0]))

    def parameters(self):
        return self.mean_net.parameters() + [self.log_std]

    def clamp_log_std(self):
        np.clip(self.log_std, *self.log_std_bounds, out=self.log_std)

    def mean(self, observations):
        """
        Mean action for one observation (float) or a batch (1D array).
        """
        output = self.mean_net.forward(observations)
        if np.ndim(output) == 1 and np.ndim(observations) == 1:
            return float(output[0])
        return output[:, 0]

    def log_prob(self, observations, actions):
        mean = np.atleast_1d(self.mean(observations))
        return gaussian_log_prob(np.atleast_1d(actions), mean, self.log_std[0])

    def entropy(self):
        return gaussian_entropy(self.log_std[0])

    def sample(self, observation, rng):
        """
        Draw an action for a single observation.

        Returns
        -------
        float
            the unclipped sample
        float
            its log density
        """
        mean = self.mean(observation)
        action = mean + self.std * rng.standard_normal()
        return float(action), float(gaussian_log_prob(action, mean, self.log_std[0]))

    def mode(self, observation):
        return self.mean(observation)

    def to_dict(self):
        return {"mean_net": self.mean_net.to_dict(),
                "log_std": float(self.log_std[0]),
                "log_std_bounds": list(self.log_std_bounds)}

    @classmethod
    def from_dict(cls, payload):
        sizes = payload["mean_net"]["sizes"]
        policy = cls(sizes[0], hidden=sizes[1], log_std_init=payload["log_std"],
                     log_std_bounds=payload["log_std_bounds"])
        policy.mean_net = Mlp.from_dict(payload["mean_net"])
        return policy


def value_net(input_dim, n_outputs=1, hidden=128, rng=None):
    """
    Critic network: (input_dim) -> hidden -> hidden -> (n_outputs).
    """
    return Mlp((input_dim, hidden, hidden, n_outputs), rng, final_scale=1.0)


def gaussian_log_prob(actions, mean, log_std):
    z_score = (actions - mean) / np.exp(log_std)
    return -0.5 * z_score ** 2 - log_std - 0.5 * LOG_2PI


def gaussian_entropy(log_std):
    return float(log_std + 0.5 * (LOG_2PI + 1.0))


class Adam:
    """
    Adam optimizer updating a list of numpy arrays in place.
    """
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.n_steps = 0
        self.first = [np.zeros_like(param) for param in params]
        self.second = [np.zeros_like(param) for param in params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("Got {} gradients for {} parameters.".format(len(grads), len(self.params)))
        self.n_steps += 1
        correction1 = 1 - self.beta1 ** self.n_steps
        correction2 = 1 - self.beta2 ** self.n_steps
        for param, grad, first, second in zip(self.params, grads, self.first, self.second):
            first *= self.beta1
            first += (1 - self.beta1) * grad
            second *= self.beta2
            second += (1 - self.beta2) * grad ** 2
            param -= self.lr * (first / correction1) / (np.sqrt(second / correction2) + self.eps)


def global_norm(grads):
    return float(np.sqrt(sum(np.sum(grad ** 2) for grad in grads)))


def clip_grad_norm(grads, max_norm):
    """
    Scale `grads` so that their joint L2 norm does not exceed `max_norm`.

    Returns
    -------
    list[numpy.ndarray]
        the (possibly scaled) gradients
    float
        the norm before clipping
    """
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0:
        return grads, norm
    factor = max_norm / norm
    return [grad * factor for grad in grads], norm


def save_checkpoint(path, policy=None, critic=None, **metadata):
    """
    Write `policy` and/or `critic` as JSON.
    """
    payload = {"format": CHECKPOINT_FORMAT,
               "version": CHECKPOINT_VERSION,
               "metadata": metadata,
               "policy": policy.to_dict() if policy is not None else None,
               "critic": critic.to_dict() if critic is not None else None}
    with open(path, "w", encoding="utf-8") as file_:
        json.dump(payload, file_)


def load_checkpoint(path):
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Returns
    -------
    GaussianPolicy or None
    Mlp or None
    dict
        metadata
    """
    with open(path, encoding="utf-8") as file_:
        payload = json.load(file_)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise IOError("{} is not a policy checkpoint.".format(path))
    if payload.get("version") != CHECKPOINT_VERSION:
        raise IOError("Checkpoint version {} of {} is not supported."
                      .format(payload.get("version"), path))
    policy = GaussianPolicy.from_dict(payload["policy"]) if payload["policy"] else None
    critic = Mlp.from_dict(payload["critic"]) if payload["critic"] else None
    return policy, critic, payload.get("metadata", {})
