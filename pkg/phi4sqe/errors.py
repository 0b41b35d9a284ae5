class GridError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class StaleHistoryError(ValueError):
    pass


class BudgetError(RuntimeError):
    def __init__(self, message, pairs):
        super().__init__(message)
        self.pairs = pairs


class BlowUpError(FloatingPointError):
    def __init__(self, t, name, dt):
        super().__init__(f"non-finite or overflowing {name} at t={t:.6g} (dt={dt:g}); reduce dt")
        self.t = t
        self.name = name
        self.dt = dt
