"""Relative-entropy metrics, causal influence ranges and causal queries"""
