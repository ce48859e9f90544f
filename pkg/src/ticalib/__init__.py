"""Dynamic on-body IMU calibration toolkit.

Modules: rotation math (rotmath), the drift/offset measurement model
(sensor_model), synthetic data (synth), the rotation-diversity trigger
(diversity), pluggable estimators (estimator, ticnet, weights), the
calibration loop and metrics (calibrator, schedule, report), and the CLI.
"""

__version__ = "0.1.0"
