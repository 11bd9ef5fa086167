class InfeasibleError(ValueError):
    """Fewer cosets than active slots (p < q)."""


class RankDeficientError(ValueError):
    """The modulation matrix of a pattern is numerically singular."""


class CapExceededError(ValueError):
    """A search would exceed its configured evaluation budget."""
