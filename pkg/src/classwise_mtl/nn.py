"""Shared-trunk two-head dense network with hand-written backprop and Adam.

Parameters live in an ordered dict of float64 arrays so that optimizers,
finite-difference checks and serialization all walk the same structure::

    trunk.0.W, trunk.0.b, ..., main.W, main.b, aux.W, aux.b

Weights are stored ``[fan_in, fan_out]`` so a layer computes ``X @ W + b``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import NonFiniteError, as_matrix


class DenseNet:
    """ReLU trunk feeding a linear main head and a raw-logit auxiliary head.

    Parameters
    ----------
    input_dim : int
        Width of the input rows.
    hidden : sequence of int
        Trunk layer widths. An empty sequence connects both heads directly
        to the input.
    main_dim, aux_dim : int
        Output widths of the main head and the auxiliary head.
    seed : int or numpy Generator
        Source for Glorot-uniform initialization. Biases start at zero.
    """

    def __init__(self, input_dim, hidden=(64, 64), main_dim=1, aux_dim=4, seed=0):
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.main_dim = int(main_dim)
        self.aux_dim = int(aux_dim)
        if min((self.input_dim, self.main_dim, self.aux_dim) + self.hidden) < 1:
            raise ValueError("all layer widths must be positive")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

        self.params = {}
        fan_in = self.input_dim
        for i, width in enumerate(self.hidden):
            self.params[f"trunk.{i}.W"] = _glorot(rng, fan_in, width)
            self.params[f"trunk.{i}.b"] = np.zeros(width)
            fan_in = width
        self.params["main.W"] = _glorot(rng, fan_in, self.main_dim)
        self.params["main.b"] = np.zeros(self.main_dim)
        self.params["aux.W"] = _glorot(rng, fan_in, self.aux_dim)
        self.params["aux.b"] = np.zeros(self.aux_dim)

    @property
    def sizes(self):
        return (self.input_dim, *self.hidden, self.main_dim, self.aux_dim)

    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())

    def trunk_keys(self):
        return [k for k in self.params if k.startswith("trunk.")]

    def flat_params(self):
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} values, got {flat.shape}")
        offset = 0
        for key, p in self.params.items():
            self.params[key] = flat[offset:offset + p.size].reshape(p.shape).copy()
            offset += p.size

    def copy(self):
        other = object.__new__(DenseNet)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def save(self, path):
        np.savez(path, __sizes__=np.array([len(self.hidden), *self.sizes]), **self.params)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            n_hidden, input_dim, *rest = (int(v) for v in data["__sizes__"])
            hidden, (main_dim, aux_dim) = rest[:n_hidden], rest[n_hidden:]
            net = cls(input_dim, hidden, main_dim, aux_dim, seed=0)
            for key in net.params:
                net.params[key] = data[key].astype(np.float64)
        return net

    def forward(self, X):
        return forward(self, X)

    def __repr__(self):
        return (f"DenseNet(input_dim={self.input_dim}, hidden={self.hidden}, "
                f"main_dim={self.main_dim}, aux_dim={self.aux_dim})")


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def forward(net, X):
    """Run the trunk and both heads.

    Returns ``(main_out, aux_out, cache)``; ``cache`` holds what
    :func:`backward` needs.
    """
    X = as_matrix(X, width=net.input_dim)
    acts = [X]
    pre = []
    a = X
    for i in range(len(net.hidden)):
        z = a @ net.params[f"trunk.{i}.W"] + net.params[f"trunk.{i}.b"]
        a = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(a)
    main_out = a @ net.params["main.W"] + net.params["main.b"]
    aux_out = a @ net.params["aux.W"] + net.params["aux.b"]
    cache = {"sizes": net.sizes, "acts": acts, "pre": pre}
    return main_out, aux_out, cache


def backward(net, cache, d_main, d_aux):
    """Backpropagate output gradients to every parameter.

    ``d_main`` and ``d_aux`` are the gradients of some scalar with respect to
    the two head outputs; trunk gradients from both heads are summed.
    """
    if cache.get("sizes") != net.sizes:
        raise ValueError(f"cache was built for sizes {cache.get('sizes')}, net has {net.sizes}")
    a = cache["acts"][-1]
    batch = a.shape[0]
    d_main = np.asarray(d_main, dtype=np.float64)
    d_aux = np.asarray(d_aux, dtype=np.float64)
    if d_main.shape != (batch, net.main_dim):
        raise ValueError(f"d_main shape {d_main.shape} != {(batch, net.main_dim)}")
    if d_aux.shape != (batch, net.aux_dim):
        raise ValueError(f"d_aux shape {d_aux.shape} != {(batch, net.aux_dim)}")

    grads = {}
    grads["main.W"] = a.T @ d_main
    grads["main.b"] = d_main.sum(axis=0)
    grads["aux.W"] = a.T @ d_aux
    grads["aux.b"] = d_aux.sum(axis=0)
    if not net.hidden:
        return _ordered(net, grads)

    dh = d_main @ net.params["main.W"].T + d_aux @ net.params["aux.W"].T
    for i in reversed(range(len(net.hidden))):
        dz = dh * (cache["pre"][i] > 0.0)
        grads[f"trunk.{i}.W"] = cache["acts"][i].T @ dz
        grads[f"trunk.{i}.b"] = dz.sum(axis=0)
        if i:
            dh = dz @ net.params[f"trunk.{i}.W"].T
    return _ordered(net, grads)


def _ordered(net, grads):
    return {k: grads[k] for k in net.params}


@dataclass
class ParamAdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """Apply one bias-corrected Adam update to ``params`` in place.

    Raises :class:`NonFiniteError` before touching anything if a gradient
    is NaN or infinite.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    for key, g in grads.items():
        if key not in params:
            raise KeyError(f"gradient for unknown parameter {key!r}")
        if g.shape != params[key].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[key].shape} for {key}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {key}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for key, g in grads.items():
        if key not in state.m:
            state.m[key] = np.zeros_like(g)
            state.v[key] = np.zeros_like(g)
        m = state.m[key] = b1 * state.m[key] + (1.0 - b1) * g
        v = state.v[key] = b2 * state.v[key] + (1.0 - b2) * (g * g)
        params[key] -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def sgd_step(params, grads, lr):
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {key}")
        params[key] -= lr * g
    return params


def finite_diff_grad(net, batch, loss_fn, h=1e-5):
    """Central-difference gradient of ``loss_fn(net, batch)`` for every parameter.

    ``net`` only needs a ``params`` dict of float arrays; entries are
    perturbed in place and restored.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    grads = {}
    for key, p in net.params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = float(loss_fn(net, batch))
            flat[j] = orig - h
            down = float(loss_fn(net, batch))
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * h)
        grads[key] = g
    return grads
