"""Shared store for the acceptance summary: criterion number -> report line."""

ACCEPTANCE = {}
