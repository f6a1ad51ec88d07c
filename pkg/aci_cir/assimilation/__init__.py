"""Closed-form filtering and online smoothing for conditionally Gaussian systems"""
