from .conditions import (Condition, ConditionReport, PatternConditional, check_condition,
                         check_overlap, pattern_conditional, selection_ratio)
from .graphical import GraphicalReport, graphical_factor_check
from .grid import GridEvaluation, GridSpec, UnsupportedSpec, default_grid
from .identifiability import (WeightExistenceResult, hstar_grid, hstar_oracle,
                              observing_patterns, project_simplex, simplex_least_squares,
                              weight_existence)

__all__ = [
    "Condition", "ConditionReport", "PatternConditional", "check_condition", "check_overlap",
    "pattern_conditional", "selection_ratio", "GraphicalReport", "graphical_factor_check",
    "GridEvaluation", "GridSpec", "UnsupportedSpec", "default_grid", "WeightExistenceResult",
    "hstar_grid", "hstar_oracle", "observing_patterns", "project_simplex",
    "simplex_least_squares", "weight_existence",
]
