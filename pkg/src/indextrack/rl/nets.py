"""Feed-forward tanh networks with optional batch norm and hand-written backprop.

Layout for hidden widths ``(h1, ..., hk)``::

    x -> [BN] -> Linear -> tanh -> [BN] -> Linear -> tanh ... -> Linear -> (identity | exp | tanh)

Batch norm sits in front of every hidden layer. In ``train`` mode it uses the
minibatch statistics; in ``eval`` mode it uses running statistics.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError

BN_EPS = 1e-5


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    output_activation: str = "linear"
    batch_norm: bool = True
    bn_momentum: float = 0.99

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError("network dimensions must be positive")
        if self.output_activation not in ("linear", "exp", "tanh"):
            raise ConfigError(f"unknown output activation {self.output_activation!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class Mlp:
    def __init__(
        self,
        spec: MlpSpec,
        rng: np.random.Generator | None = None,
        out_scale: float = 1.0,
        out_bias: float = 0.0,
    ):
        self.spec = spec
        self.params: dict[str, np.ndarray] = {}
        self.stats: dict[str, np.ndarray] = {}
        dims = (spec.input_dim, *spec.hidden, spec.output_dim)
        rng = rng if rng is not None else np.random.default_rng(0)
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            is_out = i == len(dims) - 2
            if spec.batch_norm and not is_out:
                self.params[f"gamma{i}"] = np.ones(fan_in)
                self.params[f"beta{i}"] = np.zeros(fan_in)
                self.stats[f"mean{i}"] = np.zeros(fan_in)
                self.stats[f"var{i}"] = np.ones(fan_in)
            bound = 1.0 / np.sqrt(fan_in)
            scale = out_scale if is_out else 1.0
            self.params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out)) * scale
            self.params[f"b{i}"] = (
                np.full(fan_out, float(out_bias)) if is_out else rng.uniform(-bound, bound, size=fan_out)
            )

    @property
    def n_layers(self) -> int:
        return len(self.spec.hidden) + 1

    def param_names(self) -> list[str]:
        return list(self.params)

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat(self, flat: np.ndarray) -> None:
        if flat.size != self.n_params():
            raise ConfigError(f"flat parameter vector has length {flat.size}, expected {self.n_params()}")
        pos = 0
        for name, p in self.params.items():
            self.params[name] = np.asarray(flat[pos:pos + p.size], dtype=float).reshape(p.shape).copy()
            pos += p.size

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.spec = self.spec
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.stats = {k: v.copy() for k, v in self.stats.items()}
        return other

    def forward(self, x: np.ndarray, mode: str = "eval", update_stats: bool = False):
        """Return ``(output, cache)`` for a batch ``x`` of shape ``(B, input_dim)``.

        ``mode='train'`` normalizes with batch statistics, ``mode='eval'``
        with the running ones. ``update_stats`` folds the batch moments into
        the running averages in either mode, after normalizing.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.spec.input_dim:
            raise ConfigError(f"input has width {x.shape[1]}, network expects {self.spec.input_dim}")
        if mode not in ("train", "eval"):
            raise ConfigError(f"unknown mode {mode!r}")
        cache: list[dict] = []
        a = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            layer: dict = {}
            if self.spec.batch_norm and i < last:
                if mode == "train":
                    mu = a.mean(axis=0)
                    var = a.var(axis=0)
                else:
                    mu = self.stats[f"mean{i}"]
                    var = self.stats[f"var{i}"]
                if update_stats:
                    self._update_stats(i, a)
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (a - mu) * inv_std
                layer.update(bn_xhat=xhat, bn_inv_std=inv_std, bn_batch=mode == "train")
                a = xhat * self.params[f"gamma{i}"] + self.params[f"beta{i}"]
            layer["inp"] = a
            z = a @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < last:
                a = np.tanh(z)
            elif self.spec.output_activation == "exp":
                a = np.exp(z)
            elif self.spec.output_activation == "tanh":
                a = np.tanh(z)
            else:
                a = z
            layer["out"] = a
            cache.append(layer)
        return a, cache

    def _update_stats(self, i: int, a: np.ndarray) -> None:
        m = self.spec.bn_momentum
        n = a.shape[0]
        var = a.var(axis=0, ddof=1) if n > 1 else np.zeros(a.shape[1])
        self.stats[f"mean{i}"] = m * self.stats[f"mean{i}"] + (1 - m) * a.mean(axis=0)
        self.stats[f"var{i}"] = m * self.stats[f"var{i}"] + (1 - m) * var

    def __call__(self, x: np.ndarray, mode: str = "eval") -> np.ndarray:
        return self.forward(x, mode, update_stats=False)[0]

    def backward(self, cache: list[dict], dout: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of ``sum(dout * output)`` with respect to every parameter."""
        grads: dict[str, np.ndarray] = {}
        last = self.n_layers - 1
        d = np.asarray(dout, dtype=float)
        for i in range(last, -1, -1):
            layer = cache[i]
            if i == last and self.spec.output_activation == "exp":
                dz = d * layer["out"]
            elif i == last and self.spec.output_activation == "linear":
                dz = d
            else:
                dz = d * (1.0 - layer["out"] ** 2)
            grads[f"W{i}"] = layer["inp"].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            d = dz @ self.params[f"W{i}"].T
            if "bn_xhat" in layer:
                xhat = layer["bn_xhat"]
                gamma = self.params[f"gamma{i}"]
                grads[f"gamma{i}"] = (d * xhat).sum(axis=0)
                grads[f"beta{i}"] = d.sum(axis=0)
                dxhat = d * gamma
                if layer["bn_batch"]:
                    n = xhat.shape[0]
                    d = layer["bn_inv_std"] / n * (
                        n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
                    )
                else:
                    d = dxhat * layer["bn_inv_std"]
        return {name: grads[name] for name in self.params}

    def state_dict(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/param/{k}": v for k, v in self.params.items()}
        out.update({f"{prefix}/stat/{k}": v for k, v in self.stats.items()})
        return out

    def load_state_dict(self, arrays, prefix: str) -> None:
        for k in self.params:
            self.params[k] = np.array(arrays[f"{prefix}/param/{k}"], dtype=float)
        for k in self.stats:
            self.stats[k] = np.array(arrays[f"{prefix}/stat/{k}"], dtype=float)


class Adam:
    """Adam over a list of parameter dictionaries, updated in place."""

    def __init__(self, groups: list[dict[str, np.ndarray]], lr: float = 1e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.groups = groups
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in g.items()} for g in groups]
        self.v = [{k: np.zeros_like(v) for k, v in g.items()} for g in groups]

    def step(self, grads: list[dict[str, np.ndarray]]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for group, g, m, v in zip(self.groups, grads, self.m, self.v):
            for k in group:
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k]
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] ** 2
                group[k] -= self.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + self.eps)

    def state_dict(self, prefix: str = "adam") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {f"{prefix}/t": np.array(self.t)}
        for gi, (m, v) in enumerate(zip(self.m, self.v)):
            for k in m:
                out[f"{prefix}/{gi}/m/{k}"] = m[k]
                out[f"{prefix}/{gi}/v/{k}"] = v[k]
        return out

    def load_state_dict(self, arrays, prefix: str = "adam") -> None:
        self.t = int(arrays[f"{prefix}/t"])
        for gi, (m, v) in enumerate(zip(self.m, self.v)):
            for k in m:
                m[k] = np.array(arrays[f"{prefix}/{gi}/m/{k}"], dtype=float)
                v[k] = np.array(arrays[f"{prefix}/{gi}/v/{k}"], dtype=float)
