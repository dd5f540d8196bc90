class SolverError(RuntimeError):
    """Base class for solver failures."""


class Infeasible(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class PerturbationInfeasible(Infeasible):
    pass


class HypothesisViolated(SolverError):
    """An assumption required by a check does not hold; ``info`` carries diagnostics."""

    def __init__(self, msg, info=None):
        super().__init__(msg)
        self.info = info or {}
