"""Sparse IMU and insole motion reconstruction with a physics-based tracker.

Subpackages and modules:

- ``rotmath``: rotations, 6D encoding, alignment and signal helpers
- ``calib``: device calibration and stream synchronisation
- ``insole``: pressure features and sensor observations
- ``kinnet``: staged recurrent kinematics estimator, oracle and history buffer
- ``statediff``: heading-aligned difference between estimate and simulation
- ``dyn``: humanoid simulator, controller observation, rewards and fall recovery
- ``metrics``: pose, smoothness, contact and force metrics
- ``cli``: the ``grip`` command
"""
from .exceptions import GripError

__version__ = "0.1.0"

__all__ = ["GripError", "__version__"]
