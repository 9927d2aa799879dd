"""Mini-Michelson verifier: refinement typechecker, interpreter, and
semantic soundness oracle."""

__version__ = "0.1.0"
