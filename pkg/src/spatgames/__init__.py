"""Spatially coupled evolutionary game dynamics.

Agents carry a position and a mixed strategy over a finite metric space of
pure strategies; they move with strategy-averaged velocities and adapt
their strategies by a replicator rule driven by pairwise payoffs.  The
package provides the interaction fields with certified Lipschitz
constants, structure-preserving time integrators, exact Wasserstein
distances between agent ensembles, a bank of verification experiments for
the supporting theory, and a command-line front end.

Submodules are imported explicitly (``from spatgames import dynamics``);
this top-level module stays import-light so the command-line entry point
can pin threading environment variables before numpy loads.
"""

__version__ = "0.1.0"
