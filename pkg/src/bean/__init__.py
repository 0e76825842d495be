"""A language for inferring per-variable relative backward error bounds.

Submodules: ``syntax`` (grammar, parser, normalization), ``typecheck``
(graded inference and the declarative re-checker), ``numerics`` (binary64
and ideal MPFR arithmetic, the relative-precision metric), ``semantics``
(ideal/approximate evaluators and the backward map), ``harness``
(benchmarks and soundness trials), ``cli``.
"""

import sys

__version__ = "0.1.0"

# Expression-level walkers iterate over let-spines, but types and values of
# num^n programs are right-nested chains of depth n; give those recursions
# room for vectors of a few thousand elements.
sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))
