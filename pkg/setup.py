"""Fallback setup file for backward compatibility with older Python packaging tools."""

from setuptools import setup  # type: ignore

setup()
