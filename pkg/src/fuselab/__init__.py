"""
fuselab — early versus latent-space fusion for daily mood regression.

Compares early-fusion baselines (random forest, linear regression on
concatenated features) against intermediate fusion (per-modality
autoencoders feeding a neural regressor) for PHQ-2 prediction on
multimodal longitudinal data: passive smartphone features, demographics
and a baseline PHQ-9 score.

Data comes from four ingested CSV tables or from the built-in synthetic
generator. Stage functions return railway Results.
"""

__version__ = "0.1.0"
