"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or out-of-range input (bad vertex ids, overlapping sets, ...)."""


class CapacityError(RuntimeError):
    """Requested computation exceeds an enumerability guard."""


class PreconditionError(ValueError):
    """A documented precondition of a lemma routine does not hold."""


class StageFailure(RuntimeError):
    """Structured failure of a randomized pipeline stage.

    ``stage`` names the claim or audit that gave up, ``attempts`` is the
    number of draws consumed, and ``detail`` carries audit values for logs.
    """

    def __init__(self, stage, message="", attempts=0, detail=None):
        self.stage = stage
        self.attempts = attempts
        self.detail = dict(detail or {})
        super().__init__(f"[{stage}] {message}" if message else f"[{stage}]")

    def to_dict(self):
        return {
            "stage": self.stage,
            "message": str(self),
            "attempts": self.attempts,
            "detail": self.detail,
        }
