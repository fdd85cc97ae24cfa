"""Missingness-MDPs: learning missingness functions and planning under missing features."""
