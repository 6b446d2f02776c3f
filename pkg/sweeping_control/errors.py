class SweepingError(Exception):
    def __init__(self, message, *args, **kwargs):
        super(SweepingError, self).__init__(*args)
        self._message = message
        self._details = kwargs

    @property
    def message(self) -> str:
        return self._message

    @property
    def details(self) -> dict:
        return self._details

    def what(self) -> str:
        return f"Sweeping Error [{self.__class__.__name__}]: {self.message}"

    def __str__(self) -> str:
        return self.what()


class InfeasiblePoint(SweepingError):
    pass


class NotInCone(SweepingError):
    @property
    def residual(self) -> float:
        return self.details.get('residual', float('nan'))


class NumericalFailure(SweepingError):
    pass


class DependentGenerators(SweepingError):
    pass


class DomainViolation(SweepingError):
    pass


class InfeasibleStart(SweepingError):
    pass


class DimensionMismatch(SweepingError):
    pass


class MaxIterExceeded(SweepingError):
    @property
    def best(self):
        """Best iterate reached before the budget ran out
        Returns(DiscreteSolution): best solution, flagged
        """
        return self.details.get('best')


class NoConsistentDuals(SweepingError):
    @property
    def residual(self) -> float:
        return self.details.get('residual', float('nan'))


class InconsistentSequence(SweepingError):
    pass


class ZeroDenominator(SweepingError):
    pass


class NoFeasiblePattern(SweepingError):
    pass


class ConfigError(SweepingError):
    @property
    def key(self) -> str:
        return self.details.get('key', '')


# Errors the CLI reports as bad input rather than numerical trouble
INPUT_ERRORS = (ConfigError, InfeasiblePoint, InfeasibleStart, DimensionMismatch)
