"""Shared helpers: errors, validation and formatting"""
