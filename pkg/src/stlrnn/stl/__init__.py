from .compiled import CompiledFormula
from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    Interval,
    Not,
    Or,
    Predicate,
    PredicateTable,
    RobustnessValue,
    Trace,
    TrueF,
    atoms,
    depth,
    horizon,
    to_text,
)
from .parser import FormulaSyntaxError, parse_formula
from .semantics import (
    TraceTooShortError,
    agm_and,
    agm_or,
    concat_traces,
    eval_boolean,
    eval_robustness_agm,
    eval_robustness_traditional,
    eval_robustness_with_history,
)

__all__ = [
    "Always", "And", "Atom", "CompiledFormula", "Eventually", "FormulaSyntaxError", "Interval",
    "Not", "Or", "Predicate", "PredicateTable", "RobustnessValue", "Trace", "TraceTooShortError",
    "TrueF", "agm_and", "agm_or", "atoms", "concat_traces", "depth", "eval_boolean",
    "eval_robustness_agm", "eval_robustness_traditional", "eval_robustness_with_history",
    "horizon", "parse_formula", "to_text",
]
