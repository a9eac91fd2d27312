"""SGD with classical momentum over named parameter dicts."""

import numpy as np

from .errors import ParameterError


class SGDMomentum:
    """v <- momentum * v - lr * g;  p <- p + v.

    ``scale_lr`` implements step-decay scheduling (the trainer calls it
    on validation plateaus).
    """

    def __init__(self, params, learning_rate=1e-2, momentum=0.9):
        if learning_rate < 0:
            raise ParameterError(f"learning rate must be >= 0, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise ParameterError(f"momentum must be in [0,1), got {momentum}")
        self.params = dict(params)
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(t.data) for k, t in self.params.items()}

    def step(self):
        for name, tensor in self.params.items():
            if tensor.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v -= tensor.dtype.type(self.learning_rate) * tensor.grad
            tensor.data += v

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.grad = None

    def scale_lr(self, factor):
        self.learning_rate *= factor
