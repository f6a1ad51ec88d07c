"""Governing stochastic systems: model type, integration and case-study models"""
