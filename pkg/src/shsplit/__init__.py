"""Energy-dissipating splitting integrator for the 3-D Swift-Hohenberg equation.

Modules:
    lattice   - node grid, trapezoidal discrete L2, even-reflection extension
    calculus  - finite-difference operators on the extension
    energy    - discrete energy pieces, truncation, sup-norm bound constants
    splitting - generic smooth/convex/concave splitting step and its guarantees
    linsolve  - matrix-free conjugate gradients in the weighted inner product
    scheme    - the Swift-Hohenberg instantiation (branching, monitors, runs)
    verify    - dense oracles, identity suites, samplers, convergence studies
    config    - flat key=value run configuration
    storage   - snapshot/CSV/VTK formats
    cli       - command-line entry points
"""

__version__ = "0.1.0"
