"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array dimensions do not agree with the model they are used with."""


class DivergenceError(ArithmeticError):
    """A state, adjoint or gradient left the finite range.

    Carries whatever location context was known where the blow-up was
    detected; outer layers (batch loop, epoch loop) fill in the rest with
    :meth:`with_context` before re-raising.
    """

    def __init__(self, message, step=None, sample=None, batch=None, epoch=None):
        self.message = message
        self.step = step
        self.sample = sample
        self.batch = batch
        self.epoch = epoch
        super().__init__(self._format())

    def _format(self):
        where = [
            f"{name}={value}"
            for name, value in (
                ("epoch", self.epoch),
                ("batch", self.batch),
                ("sample", self.sample),
                ("step", self.step),
            )
            if value is not None
        ]
        if not where:
            return self.message
        return f"{self.message} ({', '.join(where)})"

    def with_context(self, **context):
        fields = dict(step=self.step, sample=self.sample, batch=self.batch, epoch=self.epoch)
        for key, value in context.items():
            if fields.get(key) is None:
                fields[key] = value
        return DivergenceError(self.message, **fields)


class RankError(ValueError):
    """A matrix does not have the rank an operation requires."""


class ConstructionError(ValueError):
    """A shallow network cannot be compiled into ResNet/ODENet parameters."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible."""


class ConfigError(ValueError):
    """An experiment config file is missing keys or has invalid values."""
