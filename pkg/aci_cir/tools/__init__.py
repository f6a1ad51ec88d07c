"""Command-line verbs"""
