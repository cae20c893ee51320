"""Quantum-trajectory simulator of a three-qubit repetition code in a
two-cavity Rydberg-atom setup.

Subpackages:

- ``hilbert``    composite-space algebra (states, operators, partial trace)
- ``dynamics``   unitary primitives (cavity pulses, classical pulses, phase kicks)
- ``trajectory`` Monte Carlo wave-function engine with seeded, paired ensembles
- ``protocol``   the four-step encode / noisy-channel / decode / correct script
- ``analytic``   closed-form single-qubit model of the correction protocol
- ``cli``        batch sweep runner with CSV and plot output
"""

__version__ = "0.1.0"

from . import analytic, dynamics, hilbert, protocol, trajectory  # noqa: F401
