"""uapkit: universal adversarial perturbations against malware-style
classifiers, problem-space transformation search, and adversarial-training
defenses.

The library is organized around small immutable value types (feature
spaces, vectors, datasets, budgets, toolkits, chains) and pure functions
over them; trainers and searches are deterministic given their seeds, so
every experiment is replayable.  Thread safety follows from immutability:
objects can be shared across threads, generators cannot.
"""

from . import attacks, data, defenses, metrics, models, problem_space

__version__ = "0.1.0"

__all__ = ["attacks", "data", "defenses", "metrics", "models", "problem_space", "__version__"]
