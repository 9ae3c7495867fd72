"""
One-year mortality forecast at hospital admission.

Cohort schema and CSV loading, preprocessing, tree ensembles and KNN,
the PROFUND and Buurman baselines, metrics, the repeated hold-out
evaluation, a synthetic cohort generator and model persistence.
"""

__version__ = "0.1.0"
