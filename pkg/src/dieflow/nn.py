"""Minimal neural-network kernel: tanh MLPs with hand-written reverse-mode
gradients, Adam, and the two policy heads (categorical and diagonal
Gaussian).

Everything is plain numpy; parameters are lists of float64 arrays owned by
the caller.  Checkpoints are little-endian binary blobs with a versioned
header (magic, version, layer widths, head type) followed by the flat
parameter array.
"""

import struct

import numpy as np

_MAGIC = b"DFNN"
_VERSION = 1
_HEADS = {"linear": 0, "categorical": 1, "gaussian": 2}
_HEAD_NAMES = {v: k for k, v in _HEADS.items()}

LOG_2PI = float(np.log(2.0 * np.pi))


class Mlp:
    """Fully connected net: affine + tanh hidden layers, linear output."""

    def __init__(self, widths, rng=None, head="linear"):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if head not in _HEADS:
            raise ValueError(f"unknown head {head!r}")
        self.widths = tuple(int(w) for w in widths)
        self.head = head
        self.weights = []
        self.biases = []
        rng = rng or np.random.default_rng(0)
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    @property
    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def forward(self, x):
        """Returns (output, cache); cache holds the per-layer activations
        needed by backward."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.widths[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.widths[0]}")
        activations = [x]
        a = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if l == last else np.tanh(z)
            activations.append(a)
        return a, activations

    def backward(self, cache, d_out):
        """Gradients for all parameters plus the input, given dL/d_output.

        ``d_out`` carries any batch averaging; backward just accumulates.
        """
        d_out = np.atleast_2d(np.asarray(d_out, dtype=float))
        if d_out.shape != cache[-1].shape:
            raise ValueError("upstream gradient shape does not match cache")
        grads = [None] * (2 * len(self.weights))
        delta = d_out
        for l in range(len(self.weights) - 1, -1, -1):
            a_prev = cache[l]
            grads[2 * l] = delta.T @ a_prev
            grads[2 * l + 1] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ self.weights[l]) * (1.0 - cache[l] ** 2)
        d_in = delta @ self.weights[0]
        return grads, d_in

    def copy_from(self, other):
        for mine, theirs in zip(self.parameters, other.parameters):
            mine[...] = theirs


class Adam:
    """Bias-corrected Adam over a list of parameter arrays."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def global_grad_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_grads(grads, max_norm):
    """In-place global-norm clipping; returns the pre-clip norm."""
    norm = global_grad_norm(grads)
    if max_norm is not None and norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


# ---------------------------------------------------------------------------
# Policy heads
# ---------------------------------------------------------------------------

def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def categorical_sample(logits, rng):
    """Sample actions from softmax(logits); returns (actions, log-probs,
    entropies) for a (batch, n) logits array."""
    logits = np.atleast_2d(logits)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    u = rng.random(len(logits))
    actions = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
    actions = np.minimum(actions, logits.shape[1] - 1)
    entropy = -(probs * logp).sum(axis=1)
    return actions, logp[np.arange(len(logits)), actions], entropy


def categorical_logprob_entropy(logits, actions):
    logits = np.atleast_2d(logits)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    entropy = -(probs * logp).sum(axis=1)
    return logp[np.arange(len(logits)), np.asarray(actions, dtype=int)], entropy


def categorical_grads(logits, actions, d_logp, d_entropy):
    """d(loss)/d(logits) given per-sample weights on log-prob and entropy."""
    logits = np.atleast_2d(logits)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    n, k = logits.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), np.asarray(actions, dtype=int)] = 1.0
    d = d_logp[:, None] * (onehot - probs)
    entropy = -(probs * logp).sum(axis=1)
    d += d_entropy[:, None] * (-probs * (logp + entropy[:, None]))
    return d


def gaussian_sample(mean, log_std, rng):
    """Per-dimension Normal(mean, exp(log_std)) sample with its log-density
    and entropy.  Bounds are enforced by the caller when acting."""
    mean = np.atleast_2d(mean)
    std = np.exp(log_std)
    noise = rng.standard_normal(mean.shape)
    actions = mean + std * noise
    logp = gaussian_logprob(mean, log_std, actions)
    entropy = np.full(len(mean), float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0))))
    return actions, logp, entropy


def gaussian_logprob(mean, log_std, actions):
    mean = np.atleast_2d(mean)
    actions = np.atleast_2d(actions)
    std = np.exp(log_std)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = (actions - mean) / std
        return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(axis=1)


def gaussian_grads(mean, log_std, actions, d_logp, d_entropy):
    """d(loss)/d(mean) and d(loss)/d(log_std) from per-sample weights."""
    mean = np.atleast_2d(mean)
    actions = np.atleast_2d(actions)
    std = np.exp(log_std)
    z = (actions - mean) / std
    d_mean = d_logp[:, None] * z / std
    d_log_std = (d_logp[:, None] * (z * z - 1.0)).sum(axis=0)
    d_log_std += d_entropy.sum() * np.ones_like(log_std)
    return d_mean, d_log_std


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def save_mlp(fh, net: Mlp):
    fh.write(_MAGIC)
    fh.write(struct.pack("<II", _VERSION, len(net.widths)))
    fh.write(struct.pack(f"<{len(net.widths)}I", *net.widths))
    fh.write(struct.pack("<B", _HEADS[net.head]))
    flat = np.concatenate([p.reshape(-1) for p in net.parameters])
    fh.write(struct.pack("<Q", len(flat)))
    fh.write(flat.astype("<f8").tobytes())


def load_mlp(fh) -> Mlp:
    magic = fh.read(4)
    if magic != _MAGIC:
        raise ValueError(f"bad network magic {magic!r}")
    version, n_widths = struct.unpack("<II", fh.read(8))
    if version != _VERSION:
        raise ValueError(f"unsupported network version {version}")
    widths = struct.unpack(f"<{n_widths}I", fh.read(4 * n_widths))
    head = _HEAD_NAMES[struct.unpack("<B", fh.read(1))[0]]
    (n_params,) = struct.unpack("<Q", fh.read(8))
    flat = np.frombuffer(fh.read(8 * n_params), dtype="<f8").copy()
    net = Mlp(widths, head=head)
    offset = 0
    for p in net.parameters:
        p[...] = flat[offset: offset + p.size].reshape(p.shape)
        offset += p.size
    if offset != n_params:
        raise ValueError("parameter count mismatch in checkpoint")
    return net


def save_array(fh, arr):
    arr = np.asarray(arr, dtype=float)
    fh.write(b"DFAR")
    fh.write(struct.pack("<Q", arr.size))
    fh.write(arr.astype("<f8").tobytes())


def load_array(fh) -> np.ndarray:
    magic = fh.read(4)
    if magic != b"DFAR":
        raise ValueError(f"bad array magic {magic!r}")
    (size,) = struct.unpack("<Q", fh.read(8))
    return np.frombuffer(fh.read(8 * size), dtype="<f8").copy()
