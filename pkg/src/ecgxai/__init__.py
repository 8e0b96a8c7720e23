"""Single-lead ECG arrhythmia classification with attention-guided training.

The pipeline: record manifests and binary sample I/O (records), baseline
removal and normalization (preprocess), R-peak detection and quantitative
rhythm features (hrv), RR-variability attention targets (gtcam), a small
reverse-mode autodiff engine (engine), the residual multiresolution
network (model), losses (losses), activation-map generation and alignment
(cam), metrics (metrics), the training/evaluation harness (train), a
synthetic corpus generator (synth), and the command-line front end (cli).
"""

__version__ = "0.1.0"
