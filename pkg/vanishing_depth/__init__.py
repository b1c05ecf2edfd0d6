"""
vanishing_depth - self-supervised depth encoder pretraining at desk scale
"""
