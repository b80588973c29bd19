"""Small samples covering all feasible pairwise feature interactions."""
from .model import (Configuration, FeatureModel, Interaction, ParseError, ParseOptions,
                    from_dimacs, interaction, lit, parse_model, to_dimacs, unit_propagate,
                    write_dimacs)

__version__ = "0.1.0"
