"""Configuration: process settings, experiment files and presets"""
