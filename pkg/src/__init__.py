"""
osteorisk

Osteoporosis risk models and their explanations: six classifier families,
stratified cross-validated grid search, evaluation metrics, tree Shapley
values, local surrogate explanations and permutation importance, driven
from the command line.
"""

__version__ = "1.0.0"
__author__ = "osteorisk contributors"
