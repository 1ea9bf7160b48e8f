"""Discrete-event simulator for scheduling serverless function invocations."""

__version__ = "0.1.0"
