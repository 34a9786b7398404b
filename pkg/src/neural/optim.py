from typing import Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

Params = Dict[str, np.ndarray]


class AdamConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @field_validator("lr")
    @classmethod
    def _positive_lr(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"lr must be > 0, got {v}")
        return v


class AdamState:
    """First/second moments per named parameter, zero-initialised"""

    def __init__(self, params: Params, config: AdamConfig | None = None):
        self.config = config or AdamConfig()
        self.step = 0
        self.m: Params = {name: np.zeros_like(value) for name, value in params.items()}
        self.v: Params = {name: np.zeros_like(value) for name, value in params.items()}


def adam_step(state: AdamState, params: Params, grads: Params, frozen: frozenset = frozenset()) -> Params:
    """
    Apply one bias-corrected Adam update in place

    Parameters absent from `grads` or listed in `frozen` are left untouched.
    A zero gradient keeps both the moments and the parameter at their values.

    Returns:
        Params: The same dict, updated
    """
    cfg = state.config
    state.step += 1
    correction1 = 1.0 - cfg.beta1 ** state.step
    correction2 = 1.0 - cfg.beta2 ** state.step

    for name, grad in grads.items():
        if name in frozen:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * grad * grad
        params[name] -= cfg.lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
    return params
