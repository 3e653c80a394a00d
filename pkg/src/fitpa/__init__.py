"""Linear preferential attachment trees with additive fitness: generators,
limit objects, closed-form degree laws, couplings and measurement tools."""

__version__ = "0.1.0"

from .errors import ValidationError
from .fitness import FitnessModel, FitnessSequence, make_fitness_model, sample_fitness_sequence
from .generators import (
    Embellishment,
    PATree,
    generate_embellished_urn_tree,
    generate_sequential,
    generate_urn_tree,
)

__all__ = [
    "Embellishment",
    "FitnessModel",
    "FitnessSequence",
    "PATree",
    "ValidationError",
    "__version__",
    "generate_embellished_urn_tree",
    "generate_sequential",
    "generate_urn_tree",
    "make_fitness_model",
    "sample_fitness_sequence",
]
