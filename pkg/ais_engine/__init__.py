"""
Artificial immune system toolkit: affinity measures, negative selection,
clonal selection and an idiotypic immune-network recommender.
"""
__version__ = "0.1.0"
