"""Exception hierarchy; each class carries the CLI exit status it maps to."""


class MaserLabError(Exception):
    exit_code = 1


class ConfigError(MaserLabError):
    """Invalid configuration document; ``violations`` lists every problem found."""

    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalMethodError(MaserLabError):
    exit_code = 3


class NearDefectiveError(NumericalMethodError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"near-defective generator: reconstruction residual {residual:.3e}")


class PoleProximityError(NumericalMethodError):
    def __init__(self, eigenvalue, value):
        self.eigenvalue = eigenvalue
        self.value = value
        super().__init__(f"pole proximity: f({complex(eigenvalue):.6g}) = {complex(value):.6g}")


class SeriesNotConvergedError(NumericalMethodError):
    def __init__(self, l_max, required, bound):
        self.l_max = l_max
        self.required = required
        self.bound = bound
        super().__init__(
            f"series not converged: tail bound {bound:.3e} at l_max={l_max}, requires l_max >= {required}"
        )


class DegenerateSteadyStateError(NumericalMethodError):
    def __init__(self, kernel_dim, gap):
        self.kernel_dim = kernel_dim
        self.gap = gap
        super().__init__(f"degenerate steady state: kernel dimension {kernel_dim}, singular-value gap {gap:.3e}")


class GateFailure(MaserLabError):
    exit_code = 4
