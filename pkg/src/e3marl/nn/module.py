from __future__ import annotations

import copy

import numpy as np

from ..autodiff import Parameter, load_parameters, save_parameters


class Module:
    """Holds named parameters and sub-modules, in registration order."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, value) -> Parameter:
        p = Parameter(value, name=name)
        self._params[name] = p
        return p

    def child(self, name: str, module: Module) -> Module:
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = [(prefix + k, p) for k, p in self._params.items()]
        for k, c in self._children.items():
            out.extend(c.named_parameters(f"{prefix}{k}."))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in own.items():
            if state[k].shape != p.data.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.data.shape}")
            p.data[...] = state[k]

    def save(self, path) -> None:
        save_parameters(path, self.state_dict())

    def load(self, path) -> None:
        self.load_state_dict(load_parameters(path))

    def clone(self) -> Module:
        return copy.deepcopy(self)

    def soft_update_from(self, online: Module, tau: float) -> None:
        """target <- tau * online + (1 - tau) * target."""
        for t, o in zip(self.parameters(), online.parameters()):
            if tau == 1.0:
                t.data[...] = o.data
            else:
                t.data *= 1.0 - tau
                t.data += tau * o.data


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    return rng.standard_normal((fan_in, fan_out)) * gain / np.sqrt(max(fan_in, 1))
