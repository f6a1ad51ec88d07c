"""aci-cir - assimilative causal inference and causal influence ranges for conditional Gaussian systems"""

__version__ = "0.1.0"
__author__ = "aci-cir developers"
