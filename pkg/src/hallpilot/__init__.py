"""hallpilot: a deterministic behavioral-cloning workbench.

Simulated corridor world with LIDAR and RGB-D camera, PID and teleop experts,
time-synchronized recording, augmentation and loss-weighting catalogue, three
trainable architectures, and closed-loop evaluation.
"""

__version__ = "0.1.0"
