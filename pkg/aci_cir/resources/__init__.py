"""Artifact files and figures produced by experiment runs"""
